use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over a flat parameter block.
///
/// `step` is the 1-based step number after incrementing.
pub fn adam_update(cfg: &AdamConfig, step: u64, params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64]) {
    let t = step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Adam moments for every parameter block of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn for_mlp(net: &Mlp, config: AdamConfig) -> Self {
        let zeros_w: Vec<_> = net.layers().iter().map(|l| Array2::zeros(l.weights.dim())).collect();
        let zeros_b: Vec<_> = net.layers().iter().map(|l| Array1::zeros(l.bias.len())).collect();
        Self {
            config,
            step: 0,
            m_weights: zeros_w.clone(),
            v_weights: zeros_w,
            m_biases: zeros_b.clone(),
            v_biases: zeros_b,
        }
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite
    /// or shapes disagree.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NnError> {
        let layers = net.layers().len();
        if grads.weights.len() != layers || self.m_weights.len() != layers {
            return Err(NnError::Architecture("gradient/optimizer layer count mismatch".into()));
        }
        for (i, layer) in net.layers().iter().enumerate() {
            if grads.weights[i].dim() != layer.weights.dim()
                || grads.biases[i].len() != layer.bias.len()
                || self.m_weights[i].dim() != layer.weights.dim()
            {
                return Err(NnError::Architecture(format!("layer {i}: gradient shape mismatch")));
            }
            if grads.weights[i].iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    block: format!("layer {i} weights"),
                });
            }
            if grads.biases[i].iter().any(|g| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    block: format!("layer {i} bias"),
                });
            }
        }
        self.step += 1;
        let cfg = self.config;
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            let gw = grads.weights[i].as_standard_layout();
            adam_update(
                &cfg,
                self.step,
                layer.weights.as_slice_mut().expect("standard layout"),
                gw.as_slice().expect("standard layout"),
                self.m_weights[i].as_slice_mut().expect("standard layout"),
                self.v_weights[i].as_slice_mut().expect("standard layout"),
            );
            adam_update(
                &cfg,
                self.step,
                layer.bias.as_slice_mut().expect("standard layout"),
                grads.biases[i].as_slice().expect("standard layout"),
                self.m_biases[i].as_slice_mut().expect("standard layout"),
                self.v_biases[i].as_slice_mut().expect("standard layout"),
            );
        }
        Ok(())
    }
}

/// Adam on a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub config: AdamConfig,
    pub step: u64,
    m: f64,
    v: f64,
}

impl ScalarAdam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: 0.0,
            v: 0.0,
        }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) -> Result<(), NnError> {
        if !grad.is_finite() {
            return Err(NnError::NonFiniteGradient { block: "scalar".into() });
        }
        self.step += 1;
        let mut p = [*param];
        let mut m = [self.m];
        let mut v = [self.v];
        adam_update(&self.config, self.step, &mut p, &[grad], &mut m, &mut v);
        *param = p[0];
        self.m = m[0];
        self.v = v[0];
        Ok(())
    }
}
