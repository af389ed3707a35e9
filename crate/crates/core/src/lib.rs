//! Contrastive-learning lab: InfoNCE and its invariance/repulsion upper
//! bound, Lie-group augmentations, a small encoder/projector network with
//! hand-written gradients, and the diagnostics used to study how the
//! projector discards augmentation directions.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`). The
//! aliases below fix the scalar to `f64`, which is what the data
//! generators and the training runner use.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well. Index loops
// that walk several parallel arrays are kept as index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod augment;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod rng;
pub mod runner;
pub mod scalar;

pub use error::{LabError, Result};
pub use runner::{run_experiment, train, ExperimentConfig, ExperimentKind};

pub type Mat = linalg::Matrix<f64>;
pub type Embeddings = loss::EmbeddingSet<f64>;
pub type Network = model::Model<f64>;
pub type Projector = model::Projector<f64>;
pub type Policy = augment::AugmentationPolicy<f64>;
pub type Generator = augment::LieGenerator<f64>;

pub type Mat32 = linalg::Matrix<f32>;
pub type Embeddings32 = loss::EmbeddingSet<f32>;
