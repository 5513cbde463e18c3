//! Reference implementations used to check the library. Everything here is
//! written the slow, direct way and shares no code with `dsp_core` internals.

#![allow(dead_code, clippy::needless_range_loop)]

use dsp_core::{DescriptorGrid, GmmModel, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Compensated (Neumaier) accumulator.
#[derive(Default, Clone, Copy)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Singular values of a row-major `rows x cols` matrix by one-sided Jacobi
/// (Hestenes) rotations, sorted descending.
pub fn jacobi_singular_values(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    // Work on columns of A (or of Aᵀ when wide, which has the same singular values).
    let (m, n, mut a) = if rows >= cols {
        let cols_major: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| values[i * cols + j]).collect())
            .collect();
        (rows, cols, cols_major)
    } else {
        let rows_major: Vec<Vec<f64>> = (0..rows)
            .map(|i| values[i * cols..(i + 1) * cols].to_vec())
            .collect();
        (cols, rows, rows_major)
    };
    let _ = m;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = a[p].iter().map(|v| v * v).sum();
                let beta: f64 = a[q].iter().map(|v| v * v).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = a.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Eigenvalues (descending) and eigenvectors (as rows) of a symmetric matrix
/// by cyclic Jacobi rotations.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Population covariance of a sample.
pub fn covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| points.iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).sum::<f64>() / n)
                .collect()
        })
        .collect()
}

/// Linear-domain component density `w_k N(x; mu_k, diag(var_k))`.
pub fn naive_joint(model: &GmmModel, k: usize, x: &[f64]) -> f64 {
    let mut p = model.weights()[k];
    for j in 0..x.len() {
        let var = model.variances()[k][j];
        let diff = x[j] - model.means()[k][j];
        p *= (-diff * diff / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    }
    p
}

pub fn naive_posteriors(model: &GmmModel, x: &[f64]) -> Vec<f64> {
    let joint: Vec<f64> = (0..model.components()).map(|k| naive_joint(model, k, x)).collect();
    let mut total = Compensated::default();
    joint.iter().for_each(|&p| total.add(p));
    joint.iter().map(|p| p / total.value()).collect()
}

pub fn naive_log_likelihood(model: &GmmModel, xs: &[Vec<f64>]) -> f64 {
    let mut total = Compensated::default();
    for x in xs {
        let mut p = Compensated::default();
        (0..model.components()).for_each(|k| p.add(naive_joint(model, k, x)));
        total.add(p.value().ln());
    }
    total.value()
}

/// Direct double loop over descriptors and components, laid out
/// `[mu_1, sigma_1, ..., mu_K, sigma_K]`.
pub fn naive_fisher_vector(model: &GmmModel, xs: &[Vec<f64>]) -> Vec<f64> {
    let k = model.components();
    let d = model.dim();
    let mut acc = vec![Compensated::default(); 2 * d * k];
    for x in xs {
        let gamma = naive_posteriors(model, x);
        for c in 0..k {
            if gamma[c] < 1e-12 {
                continue;
            }
            for j in 0..d {
                let sigma = model.variances()[c][j].sqrt();
                let z = (x[j] - model.means()[c][j]) / sigma;
                acc[2 * c * d + j].add(gamma[c] * z);
                acc[(2 * c + 1) * d + j].add(gamma[c] * (z * z - 1.0));
            }
        }
    }
    let mut out = vec![0.0; 2 * d * k];
    for c in 0..k {
        let w = model.weights()[c];
        for j in 0..d {
            out[2 * c * d + j] = acc[2 * c * d + j].value() / w.sqrt();
            out[(2 * c + 1) * d + j] = acc[(2 * c + 1) * d + j].value() / (2.0 * w).sqrt();
        }
    }
    out
}

/// AP by enumeration: each relevant item's rank is one plus the number of
/// items ordered before it (higher score, or equal score and earlier index).
pub fn enumerated_average_precision(scores: &[f64], relevance: &[bool]) -> f64 {
    let n = scores.len();
    let before = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let mut ranked: Vec<(usize, usize)> = (0..n)
        .filter(|&i| relevance[i])
        .map(|i| {
            let rank = 1 + (0..n).filter(|&j| before(i, j)).count();
            let hits = 1 + (0..n).filter(|&j| relevance[j] && before(i, j)).count();
            (rank, hits)
        })
        .collect();
    // Summed best rank first so the float result does not depend on input order.
    ranked.sort();
    let sum: f64 = ranked.iter().map(|&(rank, hits)| hits as f64 / rank as f64).sum();
    sum / ranked.len() as f64
}

/// Cells whose coordinates fall inside `region`, scanned over the whole grid.
pub fn member_cells(h: usize, w: usize, region: &Region) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if r >= region.row_start && r < region.row_end && c >= region.col_start && c < region.col_end {
                cells.push((r, c));
            }
        }
    }
    cells
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..rows * cols).map(|_| normal.sample(rng)).collect()
}

/// Non-negative (ReLU-like) random grid.
pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, d: usize) -> DescriptorGrid {
    let normal = Normal::<f64>::new(0.3, 1.0).unwrap();
    let values = (0..h * w * d).map(|_| normal.sample(rng).max(0.0)).collect();
    DescriptorGrid::new(h, w, d, values).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, k: usize, d: usize) -> GmmModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let variances = (0..k).map(|_| (0..d).map(|_| rng.random_range(0.3..2.0)).collect()).collect();
    GmmModel::new(weights, means, variances).unwrap()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, scale).unwrap();
    (0..n).map(|_| (0..d).map(|_| normal.sample(rng)).collect()).collect()
}

/// Two unit-variance clusters centred exactly on `+-offset * 1`: samples are
/// drawn, then each cluster is shifted so its sample mean is the true mean.
pub fn two_clusters(rng: &mut ChaCha8Rng, per_cluster: usize, d: usize, offset: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * per_cluster);
    for sign in [1.0, -1.0] {
        let mut pts = random_points(rng, per_cluster, d, 1.0);
        for j in 0..d {
            let mean = pts.iter().map(|p| p[j]).sum::<f64>() / per_cluster as f64;
            pts.iter_mut().for_each(|p| p[j] += sign * offset - mean);
        }
        out.extend(pts);
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Grids for a three-class problem: each class draws descriptors around its
/// own prototype, with class-specific spatial structure in the top half.
pub fn class_grid(rng: &mut ChaCha8Rng, class: usize, h: usize, w: usize, d: usize) -> DescriptorGrid {
    let noise = Normal::<f64>::new(0.0, 0.35).unwrap();
    let mut values = Vec::with_capacity(h * w * d);
    for r in 0..h {
        for _c in 0..w {
            for j in 0..d {
                let band = if r < h / 2 { (class + 1) % 3 } else { class };
                let proto = if j % 3 == band { 1.2 } else { 0.2 };
                values.push((proto + noise.sample(rng)).max(0.0) * rng.random_range(0.5..2.0f64).sqrt());
            }
        }
    }
    DescriptorGrid::new(h, w, d, values).unwrap()
}
