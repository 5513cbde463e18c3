//! Dual coordinate descent for the L2-regularized, L1-loss (hinge) linear SVM.
//!
//! The bias is learned through an appended constant feature of value 1, so it
//! is regularized together with the weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Trade-off between margin and hinge loss.
    pub c: f64,
    /// Relative duality gap `(P - D) / P` at which a binary problem stops.
    pub tolerance: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BinarySolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Relative duality gap at exit.
    pub relative_gap: f64,
}

/// Solves `min 1/2 |w|^2 + C sum_i max(0, 1 - y_i (w.x_i + b))` for `y_i` in {-1, +1}.
pub(crate) fn train_binary(features: &[Vec<f64>], positive: &[bool], config: &SvmConfig, seed: u64) -> BinarySolution {
    let n = features.len();
    let dim = features[0].len();
    let c = config.c;
    let y: Vec<f64> = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    let q_diag: Vec<f64> = features.iter().map(|x| dot(x, x) + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut relative_gap = f64::INFINITY;

    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &features[i];
            let g = y[i] * (dot(&w, x) + b) - 1.0;
            let projected = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            if projected == 0.0 {
                continue;
            }
            let old = alpha[i];
            alpha[i] = (old - g / q_diag[i]).clamp(0.0, c);
            let step = (alpha[i] - old) * y[i];
            if step != 0.0 {
                w.iter_mut().zip(x).for_each(|(wj, xj)| *wj += step * xj);
                b += step;
            }
        }

        let half_norm = 0.5 * (dot(&w, &w) + b * b);
        let hinge: f64 = features
            .iter()
            .zip(&y)
            .map(|(x, yi)| (1.0 - yi * (dot(&w, x) + b)).max(0.0))
            .sum();
        let primal = half_norm + c * hinge;
        let dual = alpha.iter().sum::<f64>() - half_norm;
        relative_gap = if primal > 0.0 { (primal - dual) / primal } else { 0.0 };
        if relative_gap <= config.tolerance {
            break;
        }
    }

    BinarySolution {
        weights: w,
        bias: b,
        relative_gap,
    }
}
