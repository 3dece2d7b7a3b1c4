//! Episodic few-shot classification with query-relative losses.
//!
//! The crate is organised bottom-up:
//!
//! * [`numeric`]: unit vectors, cosine similarity, finite-difference gradients.
//! * [`loss`]: cross entropy, query-relative (with and without adaptive
//!   margins) and Jensen-Shannon MI losses with exact similarity gradients.
//! * [`data`]: datasets (synthetic or CSV), class-level splits and C-way
//!   K-shot episode sampling with shuffled labels.
//! * [`model`]: MLP embedding network, prototype head, backpropagation
//!   through the head, Adam and checkpoints.
//! * [`engine`]: training with validation-based selection, episodic
//!   evaluation with 95% intervals, sweeps and gradient checks.
//! * [`config`] / [`cli`]: the `key = value` configuration and the commands
//!   behind the `fewshot` binary.

pub mod cli;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod loss;
pub mod model;
pub mod numeric;

pub use error::{Error, Result};
