//! Semi-supervised learning with a differentiable clustering module.
//!
//! A feature extractor maps inputs to embeddings; a one-layer autoencoder
//! turns embeddings into cluster responsibilities and reconstructs them from
//! class-anchored centroids. Centroids track a moving average of labeled
//! features, and the clustering loss regularizes the extractor on unlabeled
//! data, alone or on top of pseudo-labeling or virtual adversarial training.
//!
//! Module map:
//!
//! - [`math`]: dense matrices, softmax/cross-entropy, Adam, finite differences
//! - [`clustering`]: responsibilities, reconstruction, loss, centroid updates
//! - [`mlp`]: the feature extractor
//! - [`ssl`]: pseudo-label and VAT losses
//! - [`data`]: two moons, Gaussian blobs, label splits, batches
//! - [`trainer`]: the training loop, weight averaging, evaluation
//! - [`metrics`]: matched clustering accuracy and decision grids
//! - [`experiment`]: spec files, sweeps and on-disk artifacts

// `!(x >= 0.0)` is how argument checks reject NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod data;
pub mod error;
pub mod experiment;
pub mod math;
pub mod metrics;
pub mod mlp;
pub mod rng;
pub mod ssl;
pub mod trainer;

pub use error::{Error, Result};
pub use rng::SeededRng;
