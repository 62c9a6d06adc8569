//! Decentralized proximal SGD with compressed gossip.
//!
//! Each node takes a local stochastic gradient step, soft-thresholds the
//! result, quantizes the difference between its new model and its public
//! replica with a dithered adaptive-range quantizer, and broadcasts the
//! quantized residual through a type-vector / run-length source coder.
//! Neighbors decode, update their replicas and aggregate with a
//! doubly-stochastic mixing matrix.
//!
//! Module map:
//!
//! - [`quantizer`]: dithered uniform quantization and receiver-side de-normalization.
//! - [`codec`]: Elias omega and Golomb primitives, the vector source coder, rate bounds.
//! - [`topology`]: mixing matrices, validation and spectral quantities.
//! - [`optimizer`]: SGD step, soft-thresholding, objective and projected gradient.
//! - [`tasks`]: datasets, logistic regression and a one-hidden-layer MLP.
//! - [`protocol`]: per-node state and the synchronous round engine.
//! - [`harness`]: experiment configuration, runs, codec comparison and rate diagnostics.

pub mod codec;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod protocol;
pub mod quantizer;
pub mod rng;
pub mod tasks;
pub mod topology;

pub use error::{Error, Result};
