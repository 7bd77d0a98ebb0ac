use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::SacError;
use crate::nn::{AdamConfig, ScalarAdam};

/// Entropy temperature `alpha = exp(log_alpha)`, tuned towards a target entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub log_alpha: f64,
    pub target_entropy: f64,
    optimizer: ScalarAdam,
}

impl Temperature {
    pub fn new(initial_alpha: f64, action_dim: usize, lr: f64) -> Result<Self, SacError> {
        if !(initial_alpha > 0.0 && initial_alpha.is_finite()) {
            return Err(SacError::Config(format!(
                "initial temperature {initial_alpha} must be > 0"
            )));
        }
        Ok(Self {
            log_alpha: initial_alpha.ln(),
            target_entropy: -(action_dim as f64),
            optimizer: ScalarAdam::new(AdamConfig::with_lr(lr)),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Gradient of `mean(-alpha * (log_prob + target_entropy))` w.r.t. `log_alpha`.
    pub fn gradient(&self, log_probs: ArrayView1<f64>) -> f64 {
        let gap = log_probs.iter().map(|lp| lp + self.target_entropy).sum::<f64>() / log_probs.len() as f64;
        -self.alpha() * gap
    }

    /// One Adam step on `log_alpha`; returns the loss before the step.
    pub fn update(&mut self, log_probs: ArrayView1<f64>) -> Result<f64, SacError> {
        if log_probs.is_empty() {
            return Err(SacError::Config("empty log-prob batch".into()));
        }
        let grad = self.gradient(log_probs);
        self.optimizer.step(&mut self.log_alpha, grad)?;
        Ok(grad)
    }
}
