//! Correlation alignment (CORAL) for unsupervised domain adaptation.
//!
//! Source features are re-colored so their covariance matches an unlabeled
//! target domain; a linear SVM trained on the adjusted source is then applied
//! to the target. The crate also carries the file formats, a synthetic
//! domain-shift generator and an experiment harness for evaluating methods
//! across domain pairs.

pub mod bench;
pub mod classifier;
pub mod coral;
pub mod data;
pub mod error;
pub mod linalg;

pub use classifier::{
    accuracy, cross_validate_c, predict, train_linear_svm, LabeledDataset, LinearModel, SvmOptions,
};
pub use coral::{
    apply_transform, coral_analytical, coral_regularized, estimate_covariance, normalize_features,
    pull_back_weights, CoralTransform, CovarianceMatrix, FeatureMatrix, NormalizationStats, TransformMode,
};
pub use error::{CoralError, ErrorKind, Result};
pub use linalg::{EigenDecomposition, SymmetricMatrix};
