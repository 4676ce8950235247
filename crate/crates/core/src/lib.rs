//! Gradient-based unlearning for tree ensembles.
//!
//! A trained tree ensemble is approximated by a differentiable soft decision
//! forest: every hard split indicator becomes a temperature-controlled sigmoid
//! and the ensemble vote becomes a temperature-controlled softmax. The split
//! thresholds are then optimized against a forget/retain objective (maximize
//! predictive entropy on the forget set, stay close to the original model on
//! the retain set) and the trained thresholds are copied back into the hard
//! ensemble, which remains the delivered model.
//!
//! Modules:
//! - [`dataset`]: CSV ingestion, one-hot encoding, retain/forget splits,
//!   backdoor poisoning.
//! - [`forest`]: hard trees and ensembles, CART / random-forest / SAMME
//!   trainers, deterministic inference, JSON model files.
//! - [`softforest`]: the differentiable surrogate with analytical threshold
//!   gradients.
//! - [`unlearn`]: the forget/retain losses, the combined objective, and the
//!   batch-learning loop that updates thresholds.
//! - [`eval`]: AUC-ROC, accuracy, forget entropy, backdoor attack success,
//!   retrain references, and the full experiment harness.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`];
//! the aliases below fix `f64`/`f32` variants of the main types.

pub mod dataset;
mod error;
pub mod eval;
pub mod forest;
mod kv;
pub mod scalar;
pub mod softforest;
pub mod unlearn;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset64 = dataset::TabularDataset<f64>;
pub type Dataset32 = dataset::TabularDataset<f32>;
pub type Tree64 = forest::Tree<f64>;
pub type Tree32 = forest::Tree<f32>;
pub type Ensemble64 = forest::Ensemble<f64>;
pub type Ensemble32 = forest::Ensemble<f32>;
pub type SoftForest64 = softforest::SoftForest<f64>;
pub type SoftForest32 = softforest::SoftForest<f32>;
