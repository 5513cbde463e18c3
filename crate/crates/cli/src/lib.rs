//! Command-line pipeline around `dsp_core`: manifests of descriptor grids go
//! in, GMM dictionaries, DFVF feature files, classifiers and reports come out.

pub mod commands;
pub mod config;
pub mod features;
pub mod manifest;
pub mod output;

pub use config::{ConfigArgs, PipelineConfig};
pub use features::{FeatureFile, FeatureRecord};
pub use manifest::{Manifest, ManifestEntry};
