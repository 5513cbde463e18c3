//! Average pooling of per-scale DSP vectors.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::fisher::l2_normalize;

/// Ordered rescale factors an image was encoded at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleSet(Vec<f64>);

impl ScaleSet {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        ensure!(!scales.is_empty(), Validation, "scale set must not be empty");
        ensure!(
            scales.iter().all(|&s| s > 0.0 && s.is_finite()),
            Validation,
            "scales must be positive and finite, got {scales:?}"
        );
        Ok(Self(scales))
    }

    pub fn single() -> Self {
        Self(vec![1.0])
    }

    pub fn scales(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for ScaleSet {
    /// Five scales from 1.4 down to 0.6.
    fn default() -> Self {
        Self(vec![1.4, 1.2, 1.0, 0.8, 0.6])
    }
}

impl TryFrom<Vec<f64>> for ScaleSet {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScaleSet> for Vec<f64> {
    fn from(s: ScaleSet) -> Self {
        s.0
    }
}

/// Mean of equally long vectors, l2-normalized (zero stays zero).
pub fn merge_scales<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    ensure!(!vectors.is_empty(), Validation, "no per-scale vectors to merge");
    let len = vectors[0].as_ref().len();
    ensure!(
        vectors.iter().all(|v| v.as_ref().len() == len),
        Validation,
        "per-scale vectors differ in length"
    );
    if vectors.len() == 1 {
        return Ok(l2_normalize(vectors[0].as_ref()));
    }
    let s = vectors.len() as f64;
    let mean: Vec<f64> = (0..len)
        .map(|i| {
            // Sorted per coordinate so the merge does not depend on input order.
            let mut column: Vec<f64> = vectors.iter().map(|v| v.as_ref()[i]).collect();
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / s
        })
        .collect();
    Ok(l2_normalize(&mean))
}
