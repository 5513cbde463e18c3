//! Diagonal-covariance Gaussian mixture models.
//!
//! Fitting is k-means++ seeded EM with all density math in the log domain.
//! Input descriptors are put into a canonical (lexicographic) order before
//! anything else happens, so a fit depends only on the multiset of
//! descriptors and the seed, never on the order they were supplied in.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::pca::PcaModel;

/// Components whose soft mass drops below this fraction of the sample are re-seeded.
pub const DEGENERATE_MASS_FRACTION: f64 = 1e-8;
const KMEANS_ITERATIONS: usize = 10;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFitConfig {
    /// Number of mixture components `K`.
    pub components: usize,
    pub max_iterations: usize,
    /// Relative log-likelihood change at which EM stops.
    pub tolerance: f64,
    /// Variance floor as a multiple of the global per-dimension variance.
    pub variance_floor_factor: f64,
    pub seed: u64,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        Self {
            components: 2,
            max_iterations: 100,
            tolerance: 1e-6,
            variance_floor_factor: 1e-4,
            seed: 0,
        }
    }
}

impl GmmFitConfig {
    pub fn with_components(components: usize) -> Self {
        Self {
            components,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.components >= 1, Validation, "K must be at least 1");
        ensure!(
            self.tolerance > 0.0 && self.tolerance.is_finite(),
            Validation,
            "tolerance must be positive, got {}",
            self.tolerance
        );
        ensure!(
            self.variance_floor_factor > 0.0 && self.variance_floor_factor.is_finite(),
            Validation,
            "variance floor factor must be positive, got {}",
            self.variance_floor_factor
        );
        Ok(())
    }
}

/// Soft assignment of one descriptor to the mixture components.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub gammas: Vec<f64>,
}

/// A `K`-component mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    // Cached per component: log w_k - 0.5 * sum_j log(2 pi var_kj), and 1/var.
    log_norms: Vec<f64>,
    inv_variances: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        ensure!(k >= 1, Validation, "a mixture needs at least one component");
        ensure!(
            means.len() == k && variances.len() == k,
            Validation,
            "{k} weights but {} means and {} variance vectors",
            means.len(),
            variances.len()
        );
        let d = means[0].len();
        ensure!(d >= 1, Validation, "component dimensionality must be positive");
        ensure!(
            means.iter().chain(&variances).all(|v| v.len() == d),
            Validation,
            "all means and variances must have dimension {d}"
        );
        ensure!(
            weights.iter().all(|&w| w > 0.0 && w.is_finite()),
            Validation,
            "mixture weights must be positive and finite"
        );
        let total: f64 = weights.iter().sum();
        ensure!(
            (total - 1.0).abs() <= 1e-10,
            Validation,
            "mixture weights sum to {total}, not 1"
        );
        ensure!(
            means.iter().flatten().all(|v| v.is_finite()),
            Validation,
            "component means must be finite"
        );
        ensure!(
            variances.iter().flatten().all(|&v| v > 0.0 && v.is_finite()),
            Validation,
            "component variances must be positive and finite"
        );

        let log_norms = weights
            .iter()
            .zip(&variances)
            .map(|(w, var)| w.ln() - 0.5 * var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect();
        let inv_variances = variances
            .iter()
            .map(|var| var.iter().map(|v| 1.0 / v).collect())
            .collect();
        Ok(Self {
            weights,
            means,
            variances,
            log_norms,
            inv_variances,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        ensure!(
            x.len() == self.dim(),
            Validation,
            "descriptor has dimension {} but the model expects {}",
            x.len(),
            self.dim()
        );
        Ok(())
    }

    /// `log w_k + log N(x; mu_k, diag(var_k))` for every component.
    fn log_joint_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mahalanobis: f64 = x
                .iter()
                .zip(&self.means[k])
                .zip(&self.inv_variances[k])
                .map(|((xi, mi), iv)| {
                    let diff = xi - mi;
                    diff * diff * iv
                })
                .sum();
            *o = self.log_norms[k] - 0.5 * mahalanobis;
        }
    }

    /// Overwrites `buf` with posteriors of `x` and returns `log p(x)`.
    pub(crate) fn posteriors_into(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        self.log_joint_into(x, buf);
        let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in buf.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        buf.iter_mut().for_each(|v| *v /= total);
        max + total.ln()
    }

    /// `log p(x)` under the mixture.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut buf = vec![0.0; self.components()];
        Ok(self.posteriors_into(x, &mut buf))
    }
}

pub fn posteriors(model: &GmmModel, x: &[f64]) -> Result<Posterior> {
    model.check_dim(x)?;
    let mut gammas = vec![0.0; model.components()];
    model.posteriors_into(x, &mut gammas);
    Ok(Posterior { gammas })
}

/// Total log-likelihood `sum_t log p(x_t)`.
///
/// Per-descriptor terms are summed in sorted order, so the result is
/// bit-identical under any permutation of `descriptors`.
pub fn log_likelihood<D: AsRef<[f64]>>(model: &GmmModel, descriptors: &[D]) -> Result<f64> {
    ensure!(!descriptors.is_empty(), Validation, "log-likelihood of an empty set");
    let mut buf = vec![0.0; model.components()];
    let mut terms = Vec::with_capacity(descriptors.len());
    for x in descriptors {
        let x = x.as_ref();
        model.check_dim(x)?;
        terms.push(model.posteriors_into(x, &mut buf));
    }
    terms.sort_by(f64::total_cmp);
    Ok(neumaier_sum(terms))
}

fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Component priors sorted by decreasing weight (ties by index).
pub fn gmm_priors_report(model: &GmmModel) -> Vec<(usize, f64)> {
    let mut report: Vec<(usize, f64)> = model.weights.iter().copied().enumerate().collect();
    report.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    report
}

/// What happened during a fit.
#[derive(Debug, Clone)]
pub struct GmmFitReport {
    pub model: GmmModel,
    /// Log-likelihood of each EM iterate, starting with the k-means initialization.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
    /// Number of components re-seeded because their soft mass vanished.
    pub reseeded: usize,
}

pub fn gmm_fit<D: AsRef<[f64]>>(descriptors: &[D], config: &GmmFitConfig) -> Result<GmmModel> {
    gmm_fit_traced(descriptors, config, |_, _| {}).map(|r| r.model)
}

/// Like [`gmm_fit`], calling `observer(iteration, model)` on every EM iterate.
pub fn gmm_fit_traced<D, F>(descriptors: &[D], config: &GmmFitConfig, mut observer: F) -> Result<GmmFitReport>
where
    D: AsRef<[f64]>,
    F: FnMut(usize, &GmmModel),
{
    config.validate()?;
    let k = config.components;
    ensure!(
        descriptors.len() >= k,
        Validation,
        "fitting {k} components needs at least {k} descriptors, got {}",
        descriptors.len()
    );
    let d = descriptors[0].as_ref().len();
    ensure!(d >= 1, Validation, "descriptors must have positive dimension");
    for x in descriptors {
        let x = x.as_ref();
        ensure!(x.len() == d, Validation, "descriptors have inconsistent dimensionality");
        ensure!(x.iter().all(|v| v.is_finite()), Validation, "descriptors must be finite");
    }

    let mut data: Vec<&[f64]> = descriptors.iter().map(AsRef::as_ref).collect();
    data.sort_by(|a, b| lexicographic(a, b));

    let stats = GlobalStats::new(&data, config.variance_floor_factor);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = kmeans_init(&data, k, &stats, &mut rng)?;

    let n = data.len();
    let mut gammas = vec![0.0; n * k];
    let mut log_p = vec![0.0; n];
    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    let mut reseeded = 0;

    for iteration in 0..=config.max_iterations {
        observer(iteration, &model);
        // E-step.
        for (t, x) in data.iter().enumerate() {
            log_p[t] = model.posteriors_into(x, &mut gammas[t * k..(t + 1) * k]);
        }
        let ll: f64 = log_p.iter().sum();
        ensure!(ll.is_finite(), DegenerateInput, "log-likelihood became non-finite");
        if let Some(&prev) = log_likelihoods.last() {
            let prev: f64 = prev;
            if (ll - prev).abs() <= config.tolerance * ll.abs() {
                log_likelihoods.push(ll);
                converged = true;
                break;
            }
        }
        log_likelihoods.push(ll);
        if iteration == config.max_iterations {
            break;
        }
        // M-step.
        let (next, r) = m_step(&data, &gammas, &log_p, k, &stats)?;
        model = next;
        reseeded += r;
    }

    Ok(GmmFitReport {
        model,
        log_likelihoods,
        converged,
        reseeded,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

struct GlobalStats {
    variance: Vec<f64>,
    floor: Vec<f64>,
}

impl GlobalStats {
    fn new(data: &[&[f64]], floor_factor: f64) -> Self {
        let d = data[0].len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for x in data {
            mean.iter_mut().zip(*x).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut variance = vec![0.0; d];
        for x in data {
            for ((s, v), m) in variance.iter_mut().zip(*x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        variance.iter_mut().for_each(|s| *s /= n);

        // Constant dimensions fall back to the average spread, then to 1.
        let average = variance.iter().sum::<f64>() / d as f64;
        let fallback = if average > 0.0 { average } else { 1.0 };
        let floor: Vec<f64> = variance
            .iter()
            .map(|&v| floor_factor * if v > 0.0 { v } else { fallback })
            .collect();
        let variance = variance
            .iter()
            .zip(&floor)
            .map(|(&v, &f)| v.max(f))
            .collect();
        Self { variance, floor }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let dist = squared_distance(x, center);
        if dist < best_dist {
            best = c;
            best_dist = dist;
        }
    }
    best
}

/// k-means++ seeding, a few Lloyd iterations, then moment-matched components.
fn kmeans_init(data: &[&[f64]], k: usize, stats: &GlobalStats, rng: &mut ChaCha8Rng) -> Result<GmmModel> {
    let n = data.len();
    let d = data[0].len();

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..n)].to_vec());
    let mut closest: Vec<f64> = data.iter().map(|x| squared_distance(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(data[pick].to_vec());
        let newest = centers.last().unwrap();
        for (c, x) in closest.iter_mut().zip(data) {
            *c = c.min(squared_distance(x, newest));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_ITERATIONS {
        for (a, x) in assignment.iter_mut().zip(data) {
            *a = nearest(x, &centers);
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (&a, x) in assignment.iter().zip(data) {
            counts[a] += 1;
            sums[a].iter_mut().zip(*x).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    for (a, x) in assignment.iter_mut().zip(data) {
        *a = nearest(x, &centers);
    }

    let mut counts = vec![0usize; k];
    let mut means = vec![vec![0.0; d]; k];
    for (&a, x) in assignment.iter().zip(data) {
        counts[a] += 1;
        means[a].iter_mut().zip(*x).for_each(|(s, v)| *s += v);
    }
    let mut variances = vec![vec![0.0; d]; k];
    for c in 0..k {
        if counts[c] == 0 {
            // Empty cluster: keep its center with the global spread.
            means[c] = centers[c].clone();
            variances[c] = stats.variance.clone();
            continue;
        }
        means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
    }
    for (&a, x) in assignment.iter().zip(data) {
        for ((s, v), m) in variances[a].iter_mut().zip(*x).zip(&means[a]) {
            *s += (v - m) * (v - m);
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for (s, f) in variances[c].iter_mut().zip(&stats.floor) {
                *s = (*s / counts[c] as f64).max(*f);
            }
        }
    }
    let raw: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64 / n as f64).collect();
    GmmModel::new(normalize_weights(raw), means, variances)
}

fn normalize_weights(mut weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}

fn m_step(
    data: &[&[f64]],
    gammas: &[f64],
    log_p: &[f64],
    k: usize,
    stats: &GlobalStats,
) -> Result<(GmmModel, usize)> {
    let n = data.len();
    let d = data[0].len();
    let mut mass = vec![0.0; k];
    let mut means = vec![vec![0.0; d]; k];
    for (t, x) in data.iter().enumerate() {
        for c in 0..k {
            let g = gammas[t * k + c];
            if g == 0.0 {
                continue;
            }
            mass[c] += g;
            means[c].iter_mut().zip(*x).for_each(|(m, v)| *m += g * v);
        }
    }
    for c in 0..k {
        if mass[c] > 0.0 {
            means[c].iter_mut().for_each(|m| *m /= mass[c]);
        }
    }
    let mut variances = vec![vec![0.0; d]; k];
    for (t, x) in data.iter().enumerate() {
        for c in 0..k {
            let g = gammas[t * k + c];
            if g == 0.0 {
                continue;
            }
            for ((s, v), m) in variances[c].iter_mut().zip(*x).zip(&means[c]) {
                *s += g * (v - m) * (v - m);
            }
        }
    }

    let threshold = DEGENERATE_MASS_FRACTION * n as f64;
    // Worst-explained descriptors first, for re-seeding.
    let mut worst: Vec<usize> = (0..n).collect();
    worst.sort_by(|&a, &b| log_p[a].total_cmp(&log_p[b]).then(a.cmp(&b)));
    let mut worst = worst.into_iter();
    let mut reseeded = 0;

    let mut weights = Vec::with_capacity(k);
    for c in 0..k {
        if mass[c] < threshold {
            let t = worst.next().ok_or_else(|| {
                Error::DegenerateInput("no descriptor left to re-seed an empty component".into())
            })?;
            means[c] = data[t].to_vec();
            variances[c] = stats.variance.clone();
            weights.push(1.0 / n as f64);
            reseeded += 1;
        } else {
            for (s, f) in variances[c].iter_mut().zip(&stats.floor) {
                *s = (*s / mass[c]).max(*f);
            }
            weights.push(mass[c] / n as f64);
        }
    }
    Ok((GmmModel::new(normalize_weights(weights), means, variances)?, reseeded))
}

/// On-disk JSON form of a fitted mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmDocument {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_config: Option<GmmFitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Projection applied to descriptors before the mixture, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaModel>,
    /// Free-form provenance (e.g. the pipeline configuration).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

pub const GMM_DOCUMENT_VERSION: u32 = 1;

impl GmmDocument {
    pub fn from_model(model: &GmmModel, fit_config: Option<GmmFitConfig>) -> Self {
        Self {
            version: GMM_DOCUMENT_VERSION,
            k: model.components(),
            d: model.dim(),
            weights: model.weights.clone(),
            means: model.means.clone(),
            variances: model.variances.clone(),
            seed: fit_config.as_ref().map(|c| c.seed),
            fit_config,
            pca: None,
            provenance: None,
        }
    }

    pub fn model(&self) -> Result<GmmModel> {
        ensure!(
            self.version == GMM_DOCUMENT_VERSION,
            Format,
            "unsupported GMM document version {}",
            self.version
        );
        let model = GmmModel::new(self.weights.clone(), self.means.clone(), self.variances.clone())?;
        ensure!(
            model.components() == self.k && model.dim() == self.d,
            Corruption,
            "GMM document declares K={} d={} but holds K={} d={}",
            self.k,
            self.d,
            model.components(),
            model.dim()
        );
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
