//! Improved Fisher Vector encoding of descriptor sets.
//!
//! Layout is interleaved per component: `[mu_1, sigma_1, ..., mu_K, sigma_K]`,
//! each block `d` long, `2dK` in total.

use crate::error::{ensure, Result};
use crate::gmm::GmmModel;
use crate::linalg;

/// Posteriors below this are treated as exactly zero during accumulation.
pub const POSTERIOR_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector {
    components: usize,
    dim: usize,
    values: Vec<f64>,
}

impl FisherVector {
    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Mean-gradient block of component `k`.
    pub fn mean_block(&self, k: usize) -> &[f64] {
        let start = 2 * k * self.dim;
        &self.values[start..start + self.dim]
    }

    /// Variance-gradient block of component `k`.
    pub fn variance_block(&self, k: usize) -> &[f64] {
        let start = (2 * k + 1) * self.dim;
        &self.values[start..start + self.dim]
    }

    fn map(self, f: impl FnOnce(Vec<f64>) -> Vec<f64>) -> Self {
        Self {
            values: f(self.values),
            ..self
        }
    }
}

/// Raw (un-normalized) Fisher Vector of `descriptors` under `model`.
pub fn fv_encode<D: AsRef<[f64]>>(model: &GmmModel, descriptors: &[D]) -> Result<FisherVector> {
    ensure!(!descriptors.is_empty(), Validation, "cannot encode an empty descriptor set");
    let k = model.components();
    let d = model.dim();
    for x in descriptors {
        ensure!(
            x.as_ref().len() == d,
            Validation,
            "descriptor has dimension {} but the model expects {d}",
            x.as_ref().len()
        );
    }

    let std_devs: Vec<Vec<f64>> = model
        .variances()
        .iter()
        .map(|v| v.iter().map(|s| s.sqrt()).collect())
        .collect();
    let mut values = vec![0.0; 2 * d * k];
    let mut gammas = vec![0.0; k];
    for x in descriptors {
        let x = x.as_ref();
        model.posteriors_into(x, &mut gammas);
        for c in 0..k {
            let g = gammas[c];
            if g < POSTERIOR_CUTOFF {
                continue;
            }
            let (mu_block, rest) = values[2 * c * d..(2 * c + 2) * d].split_at_mut(d);
            for j in 0..d {
                let z = (x[j] - model.means()[c][j]) / std_devs[c][j];
                mu_block[j] += g * z;
                rest[j] += g * (z * z - 1.0);
            }
        }
    }
    for (c, &w) in model.weights().iter().enumerate() {
        let mu_scale = 1.0 / w.sqrt();
        let sigma_scale = 1.0 / (2.0 * w).sqrt();
        let block = &mut values[2 * c * d..(2 * c + 2) * d];
        block[..d].iter_mut().for_each(|v| *v *= mu_scale);
        block[d..].iter_mut().for_each(|v| *v *= sigma_scale);
    }
    Ok(FisherVector {
        components: k,
        dim: d,
        values,
    })
}

/// Signed square root, `z -> sign(z) * sqrt(|z|)`.
pub fn power_normalize(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&z| if z == 0.0 { 0.0 } else { z.signum() * z.abs().sqrt() })
        .collect()
}

/// Scales to unit l2 norm; the zero vector stays zero.
pub fn l2_normalize(values: &[f64]) -> Vec<f64> {
    let norm = linalg::l2_norm(values);
    if norm == 0.0 {
        return values.to_vec();
    }
    values.iter().map(|v| v / norm).collect()
}

/// Power- and l2-normalized Fisher Vector.
pub fn improved_fv<D: AsRef<[f64]>>(model: &GmmModel, descriptors: &[D]) -> Result<FisherVector> {
    Ok(fv_encode(model, descriptors)?.map(|v| l2_normalize(&power_normalize(&v))))
}
