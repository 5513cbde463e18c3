//! Small dense linear-algebra helpers over row-major `f64` slices.

use crate::error::{ensure, Result};

/// Relative change of successive Rayleigh quotients at which power iteration stops.
pub const POWER_ITERATION_TOLERANCE: f64 = 1e-13;
pub const POWER_ITERATION_MAX_ITERS: usize = 1000;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Symmetric Gram matrix of a row-major `rows x cols` matrix, taken over
/// whichever side is smaller. Both `A Aᵀ` and `Aᵀ A` share their nonzero
/// eigenvalues, so either works for the spectral norm.
fn small_gram(values: &[f64], rows: usize, cols: usize) -> (Vec<f64>, usize) {
    if rows <= cols {
        let mut gram = vec![0.0; rows * rows];
        for i in 0..rows {
            let ri = &values[i * cols..(i + 1) * cols];
            for j in i..rows {
                let g = dot(ri, &values[j * cols..(j + 1) * cols]);
                gram[i * rows + j] = g;
                gram[j * rows + i] = g;
            }
        }
        (gram, rows)
    } else {
        let mut gram = vec![0.0; cols * cols];
        for row in values.chunks_exact(cols) {
            for i in 0..cols {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                let out = &mut gram[i * cols..(i + 1) * cols];
                for (o, &rj) in out[i..].iter_mut().zip(&row[i..]) {
                    *o += ri * rj;
                }
            }
        }
        for i in 0..cols {
            for j in 0..i {
                gram[i * cols + j] = gram[j * cols + i];
            }
        }
        (gram, cols)
    }
}

fn sym_matvec(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m.chunks_exact(n)) {
        *o = dot(row, v);
    }
}

/// Largest singular value of a row-major `rows x cols` matrix.
///
/// Runs power iteration on the smaller Gram matrix until the Rayleigh
/// quotient settles to [`POWER_ITERATION_TOLERANCE`] relative change.
pub fn spectral_norm(values: &[f64], rows: usize, cols: usize) -> Result<f64> {
    ensure!(
        values.len() == rows * cols && rows > 0 && cols > 0,
        Validation,
        "matrix of {rows}x{cols} cannot hold {} values",
        values.len()
    );
    ensure!(
        values.iter().any(|&v| v != 0.0),
        DegenerateInput,
        "spectral norm of an all-zero matrix"
    );

    let (gram, n) = small_gram(values, rows, cols);
    if n == 1 {
        return Ok(gram[0].sqrt());
    }

    // Quasi-random positive start; an all-ones start is orthogonal to the
    // leading eigenvector of too many structured matrices.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    let norm = l2_norm(&v);
    v.iter_mut().for_each(|x| *x /= norm);

    let mut w = vec![0.0; n];
    let mut rayleigh = 0.0;
    for _ in 0..POWER_ITERATION_MAX_ITERS {
        sym_matvec(&gram, n, &v, &mut w);
        let next = dot(&v, &w);
        let norm = l2_norm(&w);
        if norm == 0.0 {
            // Start vector fell in the null space; restart from a basis vector
            // on the largest diagonal entry.
            let (j, _) = (0..n)
                .map(|j| (j, gram[j * n + j]))
                .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
            v.iter_mut().for_each(|x| *x = 0.0);
            v[j] = 1.0;
            continue;
        }
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / norm);
        let converged = (next - rayleigh).abs() <= POWER_ITERATION_TOLERANCE * next.abs();
        rayleigh = next;
        if converged {
            break;
        }
    }
    // One last quotient on the settled vector.
    sym_matvec(&gram, n, &v, &mut w);
    Ok(dot(&v, &w).max(0.0).sqrt())
}
