//! End-to-end trainable kernel SVM for binary graph classification.
//!
//! A stack of message-passing convolution layers maps every labeled graph to
//! a set of vertex embeddings. Each set is embedded into the RKHS of a
//! Gaussian kernel through its (unnormalized) mean map, so the inner product
//! of two graphs is a double sum of Gaussian evaluations. A non-negative
//! combination of such kernels at several scales feeds a hinge-loss SVM
//! written in representer form, and every parameter along the way (layer
//! weights, kernel scales and weights, SVM coefficients) is fitted jointly by
//! projected Adam.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: TU-format parsing, one-hot encoding, statistics, stratified folds.
//! - [`conv`]: forward pass (and its reverse-mode counterpart) of the convolution stack.
//! - [`kernel`]: Gaussian, set, and multi-scale kernels; Gram assembly; mean-map grids.
//! - [`svm`]: decision function, prediction rule, regularized hinge objective.
//! - [`trainer`]: joint optimization, checkpoints, prediction on unseen graphs.
//! - [`harness`]: stratified cross-validation with validation-based grid search.

pub mod conv;
pub mod data;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod svm;
pub mod trainer;

pub use conv::{ConvLayerParams, ConvStack, EmbeddingSet};
pub use data::{DatasetBundle, DatasetStats, FoldAssignment, LabeledGraph};
pub use error::{Error, Result};
pub use harness::{CvReport, FoldRecord, HyperGrid};
pub use kernel::{GramMatrix, ScaleParams, SIGMA_MIN};
pub use svm::{SignedLabels, SvmParams};
pub use trainer::{AdamState, Checkpoint, Classifier, Gradients, ModelParams, TrainConfig};
