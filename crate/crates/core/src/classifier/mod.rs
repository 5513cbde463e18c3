//! One-vs-rest linear SVM classification and evaluation.

mod metrics;
mod svm;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::linalg::dot;

pub use metrics::average_precision;
pub use svm::SvmConfig;

pub type ClassId = u32;

/// Feature vectors with one or more class labels each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<Vec<ClassId>>,
    class_names: BTreeMap<ClassId, String>,
}

impl Dataset {
    /// Builds a multi-label dataset; every sample needs at least one label.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<Vec<ClassId>>) -> Result<Self> {
        ensure!(!features.is_empty(), Validation, "dataset is empty");
        ensure!(
            features.len() == labels.len(),
            Validation,
            "{} feature vectors but {} label sets",
            features.len(),
            labels.len()
        );
        let dim = features[0].len();
        ensure!(dim >= 1, Validation, "features must have positive dimension");
        ensure!(
            features.iter().all(|f| f.len() == dim),
            Validation,
            "feature vectors differ in dimension"
        );
        ensure!(
            features.iter().flatten().all(|v| v.is_finite()),
            Validation,
            "features must be finite"
        );
        ensure!(
            labels.iter().all(|l| !l.is_empty()),
            Validation,
            "every sample needs at least one label"
        );
        let labels: Vec<Vec<ClassId>> = labels
            .into_iter()
            .map(|mut l| {
                l.sort_unstable();
                l.dedup();
                l
            })
            .collect();
        let class_names = labels
            .iter()
            .flatten()
            .map(|&c| (c, c.to_string()))
            .collect();
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn single_label(features: Vec<Vec<f64>>, labels: Vec<ClassId>) -> Result<Self> {
        Self::new(features, labels.into_iter().map(|l| vec![l]).collect())
    }

    pub fn with_class_names(mut self, names: impl IntoIterator<Item = (ClassId, String)>) -> Self {
        for (id, name) in names {
            if let Some(slot) = self.class_names.get_mut(&id) {
                *slot = name;
            }
        }
        self
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[Vec<ClassId>] {
        &self.labels
    }

    pub fn is_multi_label(&self) -> bool {
        self.labels.iter().any(|l| l.len() > 1)
    }

    /// Sorted distinct class ids.
    pub fn classes(&self) -> Vec<ClassId> {
        self.class_names.keys().copied().collect()
    }

    pub fn class_names(&self) -> &BTreeMap<ClassId, String> {
        &self.class_names
    }
}

/// Per-class weight vectors and biases of a one-vs-rest linear SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub classes: Vec<ClassId>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    pub solver: SvmConfig,
    /// Relative duality gap each binary problem stopped at.
    #[serde(default)]
    pub relative_gaps: Vec<f64>,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.classes.is_empty(), Validation, "model has no classes");
        ensure!(
            self.weights.len() == self.classes.len() && self.biases.len() == self.classes.len(),
            Validation,
            "model needs one weight vector and bias per class"
        );
        let dim = self.dim();
        ensure!(
            self.weights.iter().all(|w| w.len() == dim),
            Validation,
            "class weight vectors differ in dimension"
        );
        ensure!(
            self.weights.iter().flatten().chain(&self.biases).all(|v| v.is_finite()),
            Validation,
            "model parameters must be finite"
        );
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    /// `w_c . x + b_c` for every class, in `classes` order.
    pub fn scores(&self, feature: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            feature.len() == self.dim(),
            Validation,
            "feature has dimension {} but the model expects {}",
            feature.len(),
            self.dim()
        );
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, feature) + b)
            .collect())
    }
}

/// Trains one binary SVM per class, `class vs rest`.
pub fn svm_train(data: &Dataset, config: &SvmConfig) -> Result<LinearModel> {
    ensure!(
        config.c > 0.0 && config.c.is_finite(),
        Validation,
        "C must be positive, got {}",
        config.c
    );
    ensure!(config.tolerance > 0.0, Validation, "solver tolerance must be positive");
    ensure!(data.len() >= 2, Validation, "training needs at least two samples");
    let classes = data.classes();
    ensure!(
        classes.len() >= 2,
        Validation,
        "training needs at least two distinct classes, got {classes:?}"
    );

    let solutions: Vec<svm::BinarySolution> = classes
        .par_iter()
        .map(|&class| {
            let positive: Vec<bool> = data.labels.iter().map(|l| l.contains(&class)).collect();
            let seed = config
                .seed
                .wrapping_add((class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            svm::train_binary(&data.features, &positive, config, seed)
        })
        .collect();

    let model = LinearModel {
        classes,
        weights: solutions.iter().map(|s| s.weights.clone()).collect(),
        biases: solutions.iter().map(|s| s.bias).collect(),
        c: config.c,
        solver: config.clone(),
        relative_gaps: solutions.iter().map(|s| s.relative_gap).collect(),
    };
    model.validate()?;
    Ok(model)
}

/// Highest-scoring class (lowest id on ties) and all class scores.
pub fn predict(model: &LinearModel, feature: &[f64]) -> Result<(ClassId, Vec<f64>)> {
    let scores = model.scores(feature)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        let current = scores[best];
        if s > current || (s == current && model.classes[i] < model.classes[best]) {
            best = i;
        }
    }
    Ok((model.classes[best], scores))
}

/// Fraction of samples whose predicted class is among their labels.
pub fn evaluate_accuracy(model: &LinearModel, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for (x, labels) in data.features.iter().zip(&data.labels) {
        let (class, _) = predict(model, x)?;
        if labels.contains(&class) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Accuracy restricted to the samples labeled with each class.
pub fn per_class_accuracy(model: &LinearModel, data: &Dataset) -> Result<BTreeMap<ClassId, f64>> {
    let mut totals: BTreeMap<ClassId, (usize, usize)> = BTreeMap::new();
    for (x, labels) in data.features.iter().zip(&data.labels) {
        let (class, _) = predict(model, x)?;
        for &l in labels {
            let entry = totals.entry(l).or_default();
            entry.1 += 1;
            if l == class {
                entry.0 += 1;
            }
        }
    }
    Ok(totals
        .into_iter()
        .map(|(c, (hit, total))| (c, hit as f64 / total as f64))
        .collect())
}

/// Average precision of each model class over `data`; `None` where the class
/// has no positive sample.
pub fn class_average_precisions(model: &LinearModel, data: &Dataset) -> Result<Vec<(ClassId, Option<f64>)>> {
    let scores: Vec<Vec<f64>> = data
        .features
        .iter()
        .map(|x| model.scores(x))
        .collect::<Result<_>>()?;
    Ok(model
        .classes
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let column: Vec<f64> = scores.iter().map(|s| s[i]).collect();
            let relevance: Vec<bool> = data.labels.iter().map(|l| l.contains(&class)).collect();
            (class, average_precision(&column, &relevance).ok())
        })
        .collect())
}

/// Unweighted mean of the defined per-class average precisions.
pub fn mean_average_precision(model: &LinearModel, data: &Dataset) -> Result<f64> {
    let aps: Vec<f64> = class_average_precisions(model, data)?
        .into_iter()
        .filter_map(|(_, ap)| ap)
        .collect();
    ensure!(!aps.is_empty(), Validation, "no class has a positive sample");
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> LinearModel {
        LinearModel {
            classes: vec![1, 2],
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            biases: vec![0.0, 0.0],
            c: 1.0,
            solver: SvmConfig::default(),
            relative_gaps: vec![],
        }
    }

    #[test]
    fn predict_scores_and_argmax() {
        let (class, scores) = predict(&two_by_two(), &[2.0, 1.0]).unwrap();
        assert_eq!(class, 1);
        assert_eq!(scores, vec![2.0, 1.0]);
        assert!(predict(&two_by_two(), &[1.0]).is_err());
    }

    #[test]
    fn exact_tie_goes_to_lowest_id() {
        let mut m = two_by_two();
        m.classes = vec![7, 3];
        let (class, _) = predict(&m, &[1.0, 1.0]).unwrap();
        assert_eq!(class, 3);
    }

    #[test]
    fn zero_weight_class_does_not_change_other_scores() {
        let mut m = two_by_two();
        m.classes.push(9);
        m.weights.push(vec![0.0, 0.0]);
        m.biases.push(0.0);
        let (class, scores) = predict(&m, &[2.0, 1.0]).unwrap();
        assert_eq!(class, 1);
        assert_eq!(scores, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn accuracy_counts() {
        let data = Dataset::single_label(
            vec![vec![2.0, 0.0], vec![0.0, 2.0], vec![1.0, 3.0], vec![3.0, 1.0], vec![1.0, 2.0]],
            vec![1, 2, 1, 1, 2],
        )
        .unwrap();
        // Predictions 1, 2, 2, 1, 2: only the third is wrong.
        assert_eq!(evaluate_accuracy(&two_by_two(), &data).unwrap(), 0.8);
        let per = per_class_accuracy(&two_by_two(), &data).unwrap();
        assert!((per[&1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(per[&2], 1.0);
    }

    #[test]
    fn single_class_training_is_rejected() {
        let data = Dataset::single_label(vec![vec![1.0], vec![2.0]], vec![0, 0]).unwrap();
        assert!(svm_train(&data, &SvmConfig::default()).is_err());
        let data = Dataset::single_label(vec![vec![1.0], vec![2.0]], vec![0, 1]).unwrap();
        let bad = SvmConfig {
            c: 0.0,
            ..SvmConfig::default()
        };
        assert!(svm_train(&data, &bad).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::single_label(vec![], vec![]).is_err());
        assert!(Dataset::single_label(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1]).is_err());
        assert!(Dataset::new(vec![vec![1.0]], vec![vec![]]).is_err());
        let d = Dataset::new(vec![vec![1.0], vec![2.0]], vec![vec![3, 1, 3], vec![2]]).unwrap();
        assert!(d.is_multi_label());
        assert_eq!(d.labels()[0], vec![1, 3]);
        assert_eq!(d.classes(), vec![1, 2, 3]);
    }

    #[test]
    fn model_json_round_trip() {
        let m = two_by_two();
        assert_eq!(LinearModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
