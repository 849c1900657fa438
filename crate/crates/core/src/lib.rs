//! Sample-level image realism scoring.
//!
//! Activations of a pretrained image network are compared, layer by layer,
//! against a pool of activations from real images. The nearest-neighbor
//! distances, summed over spatial locations, give one number per layer, and
//! a logistic regression maps those numbers to the probability that a human
//! judges the image real.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod format;
pub mod labels;
pub mod layers;
pub mod pool;
pub mod regression;
pub mod sampling;
pub mod tensor_io;

pub use error::{Error, Result};
pub use evaluation::{
    binary_accuracy, evaluate, spearman_rho, split, EvalMode, EvalReport, SplitSpec,
};
pub use features::{
    featurize, layer_feature, nn_distance, Aggregation, FeatureTable, FeatureVector,
};
pub use labels::{LabelKind, LabelRecord, LabelSet};
pub use pool::{build_pool, load_pool, save_pool, PoolConfig, PoolScope, ReferencePool};
pub use regression::{fit, load_model, save_model, FitOptions, RealismModel, TrainSet};
pub use tensor_io::{read_bundle, read_tensor, write_tensor, ActivationBundle, ActivationTensor};
