//! Deep spatial pyramid image representations.
//!
//! Turns grids of dense local descriptors (for example the last pooling
//! layer of a convolutional network) into fixed-length vectors:
//!
//! 1. normalize the `T x d` descriptor matrix ([`NormalizationMode`]),
//! 2. split the grid into a two-level pyramid ([`build_layout`]),
//! 3. encode every region as an improved Fisher Vector under a small-`K`
//!    diagonal GMM ([`improved_fv`]),
//! 4. concatenate and l2-normalize ([`dsp_encode`]),
//! 5. optionally average several scales ([`merge_scales`]).
//!
//! The resulting vectors feed a one-vs-rest linear SVM ([`svm_train`]).

pub mod classifier;
pub mod error;
pub mod fisher;
pub mod gmm;
pub mod grid;
pub mod linalg;
pub mod multiscale;
pub mod pca;
pub mod pyramid;

pub use classifier::{
    average_precision, class_average_precisions, evaluate_accuracy, mean_average_precision,
    per_class_accuracy, predict, svm_train, ClassId, Dataset, LinearModel, SvmConfig,
};
pub use error::{Error, Result};
pub use fisher::{fv_encode, improved_fv, l2_normalize, power_normalize, FisherVector};
pub use gmm::{
    gmm_fit, gmm_fit_traced, gmm_priors_report, log_likelihood, posteriors, GmmDocument,
    GmmFitConfig, GmmFitReport, GmmModel, Posterior,
};
pub use grid::{load_grid, save_grid, DescriptorGrid, NormalizationMode};
pub use multiscale::{merge_scales, ScaleSet};
pub use pca::{pca_apply, pca_fit, PcaModel};
pub use pyramid::{build_layout, dsp_encode, partition, PyramidLayout, Region};
