//! Minimal reverse-mode autodiff over dense f64 arrays: enough for an MLP
//! backbone, a projector, the stochastic embedding module, and every loss
//! term in the training objective.

pub mod gradcheck;
pub mod sgd;
pub mod tape;
pub mod tensor;

pub use sgd::{SgdConfig, SgdState};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
