//! Plain (non-whitening) PCA for descriptor dimensionality reduction.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::grid::DescriptorGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `q x d`, row-major, orthonormal rows ordered by decreasing variance.
    basis: Vec<f64>,
    q: usize,
    /// Variance captured along each retained direction; empty for
    /// hand-built models.
    #[serde(default)]
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Builds a model from explicit parts; rows of `basis` must be orthonormal.
    pub fn from_parts(mean: Vec<f64>, basis: Vec<f64>, q: usize) -> Result<Self> {
        let d = mean.len();
        ensure!(d >= 1 && q >= 1 && q <= d, Validation, "need 1 <= q <= d, got q={q}, d={d}");
        ensure!(basis.len() == q * d, Validation, "basis must hold {q}x{d} values");
        for i in 0..q {
            for j in i..q {
                let g: f64 = (0..d).map(|c| basis[i * d + c] * basis[j * d + c]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                ensure!(
                    (g - expected).abs() <= 1e-6,
                    Validation,
                    "basis rows {i} and {j} are not orthonormal (dot = {g})"
                );
            }
        }
        Ok(Self {
            mean,
            basis,
            q,
            eigenvalues: Vec::new(),
        })
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis_row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.basis[i * d..(i + 1) * d]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `basis * (x - mean)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            x.len() == self.d(),
            Validation,
            "PCA expects {}-dimensional input, got {}",
            self.d(),
            x.len()
        );
        Ok(self.project_unchecked(x))
    }

    fn project_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.q)
            .map(|i| {
                self.basis_row(i)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(b, (v, m))| b * (v - m))
                    .sum()
            })
            .collect()
    }

    /// Maps a projected vector back to descriptor space.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut x = self.mean.clone();
        for (i, &zi) in z.iter().enumerate().take(self.q) {
            for (xc, b) in x.iter_mut().zip(&self.basis[i * d..(i + 1) * d]) {
                *xc += zi * b;
            }
        }
        x
    }
}

/// Fits PCA on a set of `d`-vectors, keeping the top `q` directions.
pub fn pca_fit<D: AsRef<[f64]>>(descriptors: &[D], q: usize) -> Result<PcaModel> {
    ensure!(!descriptors.is_empty(), Validation, "PCA needs at least one descriptor");
    let d = descriptors[0].as_ref().len();
    ensure!(q >= 1 && q <= d, Validation, "PCA target q={q} must lie in [1, {d}]");
    ensure!(
        descriptors.len() > q,
        Validation,
        "PCA with q={q} needs at least {} descriptors, got {}",
        q + 1,
        descriptors.len()
    );
    ensure!(
        descriptors.iter().all(|x| x.as_ref().len() == d),
        Validation,
        "descriptors have inconsistent dimensionality"
    );

    let n = descriptors.len() as f64;
    let mut mean = vec![0.0; d];
    for x in descriptors {
        for (m, v) in mean.iter_mut().zip(x.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for x in descriptors {
        for ((c, v), m) in centered.iter_mut().zip(x.as_ref()).zip(&mean) {
            *c = v - m;
        }
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut basis = Vec::with_capacity(q * d);
    let mut eigenvalues = Vec::with_capacity(q);
    for &k in order.iter().take(q) {
        let col = eig.eigenvectors.column(k);
        // Fix the sign so the largest-magnitude coordinate is positive.
        let pivot = (0..d)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .unwrap();
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        basis.extend(col.iter().map(|v| sign * v));
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
    }

    Ok(PcaModel {
        mean,
        basis,
        q,
        eigenvalues,
    })
}

/// Projects every cell of a grid; the output has `d = q`.
pub fn pca_apply(model: &PcaModel, grid: &DescriptorGrid) -> Result<DescriptorGrid> {
    ensure!(
        grid.d() == model.d(),
        Validation,
        "grid has d={} but PCA model expects d={}",
        grid.d(),
        model.d()
    );
    let values: Vec<f64> = grid
        .descriptors()
        .flat_map(|x| model.project_unchecked(x))
        .collect();
    DescriptorGrid::with_scale(grid.h(), grid.w(), model.q(), values, grid.scale_tag())
}
