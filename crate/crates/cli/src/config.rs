//! Pipeline configuration: a JSON file whose fields can each be overridden
//! from the command line.

use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::Args;
use dsp_core::{GmmFitConfig, NormalizationMode, ScaleSet, SvmConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// GMM components.
    #[serde(rename = "K")]
    pub k: usize,
    /// Pyramid levels, 1 or 2.
    pub levels: usize,
    pub normalization: NormalizationMode,
    /// Rescale factors every image must have a grid for.
    pub scales: ScaleSet,
    #[serde(rename = "svm_C")]
    pub svm_c: f64,
    pub seed: u64,
    /// PCA target dimensionality; no projection when absent.
    pub pca_q: Option<usize>,
    pub gmm_max_iterations: usize,
    pub gmm_tolerance: f64,
    pub variance_floor_factor: f64,
    /// Cap on descriptors sampled from each image for dictionary training.
    pub max_descriptors_per_image: Option<usize>,
    /// Train the dictionary on every scale rather than scale 1.0 only.
    pub gmm_all_scales: bool,
    pub svm_tolerance: f64,
    pub svm_max_epochs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let gmm = GmmFitConfig::default();
        let svm = SvmConfig::default();
        Self {
            k: gmm.components,
            levels: 2,
            normalization: NormalizationMode::default(),
            scales: ScaleSet::default(),
            svm_c: svm.c,
            seed: 0,
            pca_q: None,
            gmm_max_iterations: gmm.max_iterations,
            gmm_tolerance: gmm.tolerance,
            variance_floor_factor: gmm.variance_floor_factor,
            max_descriptors_per_image: None,
            gmm_all_scales: false,
            svm_tolerance: svm.tolerance,
            svm_max_epochs: svm.max_epochs,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.k >= 1, "K must be at least 1");
        ensure!(matches!(self.levels, 1 | 2), "levels must be 1 or 2, got {}", self.levels);
        ensure!(self.svm_c > 0.0 && self.svm_c.is_finite(), "svm_C must be positive, got {}", self.svm_c);
        ensure!(self.pca_q != Some(0), "pca_q must be at least 1");
        ensure!(self.max_descriptors_per_image != Some(0), "max_descriptors_per_image must be at least 1");
        Ok(())
    }

    pub fn gmm_fit_config(&self) -> GmmFitConfig {
        GmmFitConfig {
            components: self.k,
            max_iterations: self.gmm_max_iterations,
            tolerance: self.gmm_tolerance,
            variance_floor_factor: self.variance_floor_factor,
            seed: self.seed,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.svm_c,
            tolerance: self.svm_tolerance,
            max_epochs: self.svm_max_epochs,
            seed: self.seed,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config always serializes")
    }
}

fn parse_scales(text: &str) -> Result<ScaleSet, String> {
    let scales = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad scale {s:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    ScaleSet::new(scales).map_err(|e| e.to_string())
}

/// Flags shared by every command that reads the pipeline configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON configuration file; flags below override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Number of GMM components.
    #[arg(short = 'k', long = "components", value_name = "K")]
    pub k: Option<usize>,
    /// Pyramid levels (1 = whole grid, 2 = whole grid + quadrants + center).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Descriptor normalization: none, l2-vector or l2-matrix.
    #[arg(long)]
    pub normalization: Option<NormalizationMode>,
    /// Comma-separated scale factors, e.g. 1.4,1.2,1.0,0.8,0.6.
    #[arg(long, value_parser = parse_scales)]
    pub scales: Option<ScaleSet>,
    /// SVM regularization trade-off.
    #[arg(short = 'c', long = "svm-c", value_name = "C")]
    pub svm_c: Option<f64>,
    /// Seed for GMM initialization, descriptor sampling and SVM shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Project descriptors onto this many principal components first.
    #[arg(long)]
    pub pca_q: Option<usize>,
    /// Sample at most N descriptors per grid when training the GMM.
    #[arg(long, value_name = "N")]
    pub max_descriptors_per_image: Option<usize>,
    /// Train the GMM on grids of every scale, not just 1.0.
    #[arg(long)]
    pub gmm_all_scales: bool,
}

impl ConfigArgs {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(levels) = self.levels {
            config.levels = levels;
        }
        if let Some(mode) = self.normalization {
            config.normalization = mode;
        }
        if let Some(scales) = &self.scales {
            config.scales = scales.clone();
        }
        if let Some(c) = self.svm_c {
            config.svm_c = c;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if self.pca_q.is_some() {
            config.pca_q = self.pca_q;
        }
        if self.max_descriptors_per_image.is_some() {
            config.max_descriptors_per_image = self.max_descriptors_per_image;
        }
        if self.gmm_all_scales {
            config.gmm_all_scales = true;
        }
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.k, c.levels, c.svm_c), (2, 2, 1.0));
        assert_eq!(c.normalization, NormalizationMode::L2Matrix);
        assert_eq!(c.scales.scales(), &[1.4, 1.2, 1.0, 0.8, 0.6]);
        assert_eq!(c.pca_q, None);
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"K": 4, "scales": [1.0]}"#).unwrap();
        assert_eq!(c.k, 4);
        assert_eq!(c.levels, 2);
        assert_eq!(c.scales.scales(), &[1.0]);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"k": 4}"#).is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"K": 4, "levels": 1, "seed": 9}"#).unwrap();
        let args = ConfigArgs {
            config: Some(path),
            k: Some(3),
            scales: Some(parse_scales("1.0, 0.5").unwrap()),
            ..ConfigArgs::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!((c.k, c.levels, c.seed), (3, 1, 9));
        assert_eq!(c.scales.scales(), &[1.0, 0.5]);
    }

    #[test]
    fn rejects_bad_values() {
        let args = ConfigArgs {
            levels: Some(3),
            ..ConfigArgs::default()
        };
        assert!(args.resolve().is_err());
        assert!(parse_scales("1.0,-2").is_err());
        assert!(parse_scales("x").is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = PipelineConfig {
            pca_q: Some(64),
            ..PipelineConfig::default()
        };
        let back: PipelineConfig = serde_json::from_value(c.to_value()).unwrap();
        assert_eq!(back, c);
    }
}
