//! SGD with momentum and weight decay.
//!
//! Update rule: `v <- momentum * v + grad + weight_decay * param`,
//! then `param <- param - lr * v`. Optimizer state lives outside the
//! model and is reused across steps.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

pub struct SgdState {
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            velocity: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        }
    }

    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[&Tensor],
        config: &SgdConfig,
    ) -> Result<()> {
        if !(config.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                config.lr
            )));
        }
        if params.len() != grads.len() || params.len() != self.velocity.len() {
            return Err(Error::ShapeMismatch {
                op: "sgd_step",
                details: format!(
                    "{} params, {} grads, {} velocity buffers",
                    params.len(),
                    grads.len(),
                    self.velocity.len()
                ),
            });
        }
        for ((param, grad), velocity) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if param.shape() != grad.shape() {
                return Err(Error::ShapeMismatch {
                    op: "sgd_step",
                    details: format!("param {:?} vs grad {:?}", param.shape(), grad.shape()),
                });
            }
            for ((v, &g), p) in velocity
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(param.data_mut())
            {
                *v = config.momentum * *v + g + config.weight_decay * *p;
                *p -= config.lr * *v;
            }
        }
        Ok(())
    }
}
