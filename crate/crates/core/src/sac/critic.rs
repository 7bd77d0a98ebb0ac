use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SacError;
use crate::exec::Exec;
use crate::nn::{Activation, AdamConfig, AdamState, InitConfig, Mlp};

/// K online Q-networks, their Polyak-averaged targets and optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCritic {
    online: Vec<Mlp>,
    target: Vec<Mlp>,
    optimizers: Vec<AdamState>,
    tau: f64,
}

impl EnsembleCritic {
    /// With `diversity`, every hidden layer of every critic draws its
    /// activation from ReLU / LeakyReLU / ELU and parameters receive additive
    /// `N(0, param_noise_std^2)` noise; otherwise all critics are plain ReLU.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        k: usize,
        input_dim: usize,
        hidden: &[usize],
        diversity: bool,
        param_noise_std: f64,
        lr: f64,
        tau: f64,
        rng: &mut R,
    ) -> Result<Self, SacError> {
        if k == 0 {
            return Err(SacError::Config("ensemble needs at least one critic".into()));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(SacError::Config(format!("tau = {tau} outside [0, 1]")));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let init = InitConfig {
            param_noise_std: if diversity { param_noise_std } else { 0.0 },
        };
        let online = (0..k)
            .map(|_| {
                let acts: Vec<Activation> = if diversity {
                    hidden
                        .iter()
                        .map(|_| *Activation::DIVERSE.choose(rng).expect("non-empty pool"))
                        .collect()
                } else {
                    vec![Activation::Relu; hidden.len()]
                };
                Mlp::new(&dims, &acts, init, rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let optimizers = online
            .iter()
            .map(|net| AdamState::for_mlp(net, AdamConfig::with_lr(lr)))
            .collect();
        Ok(Self {
            target: online.clone(),
            online,
            optimizers,
            tau,
        })
    }

    pub fn from_parts(online: Vec<Mlp>, lr: f64, tau: f64) -> Result<Self, SacError> {
        if online.is_empty() {
            return Err(SacError::Config("ensemble needs at least one critic".into()));
        }
        let optimizers = online
            .iter()
            .map(|net| AdamState::for_mlp(net, AdamConfig::with_lr(lr)))
            .collect();
        Ok(Self {
            target: online.clone(),
            online,
            optimizers,
            tau,
        })
    }

    pub fn k(&self) -> usize {
        self.online.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn online(&self) -> &[Mlp] {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut [Mlp] {
        &mut self.online
    }

    pub fn target(&self) -> &[Mlp] {
        &self.target
    }

    pub fn input_dim(&self) -> usize {
        self.online[0].input_dim()
    }

    pub fn activation_tags(&self) -> Vec<Vec<Activation>> {
        self.online.iter().map(Mlp::activations).collect()
    }

    /// True if some pair of critics differs in activations or parameters.
    pub fn is_diverse(&self) -> bool {
        self.online
            .iter()
            .enumerate()
            .any(|(i, a)| self.online[i + 1..].iter().any(|b| !a.bitwise_eq(b)))
    }

    /// `batch x K` matrix of critic outputs.
    pub fn q_matrix(&self, inputs: ArrayView2<f64>, use_target: bool, exec: Exec) -> Result<Array2<f64>, SacError> {
        let nets = if use_target { &self.target } else { &self.online };
        let cols = exec.map(nets, |net| net.forward_batch(inputs));
        let mut q = Array2::zeros((inputs.nrows(), nets.len()));
        for (k, col) in cols.into_iter().enumerate() {
            q.column_mut(k).assign(&col?.column(0));
        }
        Ok(q)
    }

    /// One Adam step per online critic on `mean((Q_k - y)^2)`. Returns the
    /// pre-step losses. Targets are not touched.
    pub fn regress(&mut self, inputs: ArrayView2<f64>, y: ArrayView1<f64>, exec: Exec) -> Result<Vec<f64>, SacError> {
        let b = inputs.nrows() as f64;
        let mut pairs: Vec<(&mut Mlp, &mut AdamState)> =
            self.online.iter_mut().zip(self.optimizers.iter_mut()).collect();
        exec.map_mut(&mut pairs, |_, (net, opt)| -> Result<f64, SacError> {
            let (q, tape) = net.forward_tape(inputs)?;
            let residual = &q.column(0) - &y;
            let loss = residual.dot(&residual) / b;
            let grad = (residual * (2.0 / b)).insert_axis(Axis(1));
            let grads = net.backward(&tape, grad.view())?;
            opt.step(net, &grads)?;
            Ok(loss)
        })
        .into_iter()
        .collect()
    }

    /// `target <- (1 - tau) * target + tau * online` for every critic.
    pub fn polyak_update(&mut self) {
        let tau = self.tau;
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.polyak_from(o, tau);
        }
    }

    /// Gradient of `sum_{i,k} dq[i,k] * Q_k(x_i)` w.r.t. the trailing
    /// `action_dim` input columns. Parameters are left untouched.
    pub fn action_gradient(
        &self,
        inputs: ArrayView2<f64>,
        dq: ArrayView2<f64>,
        action_dim: usize,
        exec: Exec,
    ) -> Result<Array2<f64>, SacError> {
        let start = self.input_dim() - action_dim;
        let parts = exec.map_indices(self.online.len(), |k| -> Result<Array2<f64>, SacError> {
            let net = &self.online[k];
            let (_, tape) = net.forward_tape(inputs)?;
            let g = dq.column(k).to_owned().insert_axis(Axis(1));
            let grads = net.backward(&tape, g.view())?;
            Ok(grads.input.slice(s![.., start..]).to_owned())
        });
        let mut total = Array2::zeros((inputs.nrows(), action_dim));
        for p in parts {
            total += &p?;
        }
        Ok(total)
    }

    /// Sum of squared parameter distances between online and target nets.
    pub fn target_distance(&self) -> f64 {
        self.online
            .iter()
            .zip(&self.target)
            .map(|(o, t)| o.param_distance(t).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn bitwise_eq(&self, other: &EnsembleCritic) -> bool {
        self.online.len() == other.online.len()
            && self.online.iter().zip(&other.online).all(|(a, b)| a.bitwise_eq(b))
            && self.target.iter().zip(&other.target).all(|(a, b)| a.bitwise_eq(b))
    }
}
