//! SNSCL: stochastic noise-tolerated supervised contrastive learning,
//! exercised on synthetic fine-grained datasets with controlled label noise.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`autodiff`] — tape-based reverse-mode differentiation and SGD
//! - [`data`] — synthetic fine-grained blob datasets and label-noise injection
//! - [`labels`] — soft labels, weighted correction, moving-average updates
//! - [`reliability`] — per-sample loss sweep, two-component GMM, reliability
//!   scores and sample weights
//! - [`queue`] — class-partitioned FIFO momentum queue with weight-gated
//!   insertion
//! - [`model`] — MLP backbone, projector, stochastic embedding module
//! - [`contrastive`] — noise-tolerated contrastive loss plus InfoNCE and
//!   batch SCL references
//! - [`trainer`] — warmup, per-epoch correction, the full training loop
//! - [`config`] / [`harness`] — experiment configs and the `gen` / `train` /
//!   `compare` command drivers behind the `snscl` binary

pub mod autodiff;
pub mod config;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod harness;
pub mod labels;
pub mod model;
pub mod queue;
pub mod reliability;
pub mod trainer;

pub use error::{Error, Result};
