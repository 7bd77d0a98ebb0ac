use std::f64::consts::{LN_2, PI};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SacError;
use crate::nn::{Activation, Gradients, InitConfig, Mlp, Tape};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `log(1 - tanh(u)^2)` without cancellation.
#[inline]
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (LN_2 - u - softplus)
}

/// Log-density of `a = tanh(u)`, `u ~ N(mean, exp(log_std)^2)`, summed over dimensions.
pub fn tanh_gaussian_log_density(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let u = a.atanh();
            let eps = (u - m) / ls.exp();
            -0.5 * eps * eps - ls - 0.5 * (2.0 * PI).ln() - log_one_minus_tanh_sq(u)
        })
        .sum()
}

/// Tanh-squashed diagonal Gaussian policy. The trunk emits
/// `[mean_1..mean_d, log_std_1..log_std_d]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianPolicy {
    trunk: Mlp,
    action_dim: usize,
}

/// A reparameterised batch of actions with everything needed for backprop.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    noise: Array2<f64>,
    std: Array2<f64>,
    log_std_clamped: Array2<bool>,
    tape: Tape,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self, SacError> {
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(2 * action_dim);
        let acts = vec![Activation::Relu; hidden.len()];
        let trunk = Mlp::new(&dims, &acts, InitConfig::default(), rng)?;
        Self::from_trunk(trunk)
    }

    pub fn from_trunk(trunk: Mlp) -> Result<Self, SacError> {
        let out = trunk.output_dim();
        if !out.is_multiple_of(2) {
            return Err(SacError::Config(format!(
                "policy trunk output {out} is not 2 * action_dim"
            )));
        }
        Ok(Self {
            trunk,
            action_dim: out / 2,
        })
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    fn split(&self, out: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let d = self.action_dim;
        let mean = out.slice(s![.., ..d]).to_owned();
        let log_std = out.slice(s![.., d..]).to_owned();
        (mean, log_std)
    }

    /// Mean and clamped log-std for a batch of states.
    pub fn head(&self, states: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>), SacError> {
        let out = self.trunk.forward_batch(states)?;
        let (mean, log_std) = self.split(&out);
        Ok((mean, log_std.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))))
    }

    /// Action for a single observation. Stochastic mode samples through the
    /// reparameterisation; deterministic mode returns `tanh(mean)`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>, SacError> {
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(SacError::NonFiniteState);
        }
        let view = ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
        let (mean, log_std) = self.head(view)?;
        Ok((0..self.action_dim)
            .map(|i| {
                let m = mean[[0, i]];
                if deterministic {
                    m.tanh()
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    (m + log_std[[0, i]].exp() * z).tanh()
                }
            })
            .collect())
    }

    /// Reparameterised sample with the trunk tape retained.
    pub fn sample<R: Rng + ?Sized>(&self, states: ArrayView2<f64>, rng: &mut R) -> Result<PolicySample, SacError> {
        let (out, tape) = self.trunk.forward_tape(states)?;
        let (mean, raw_log_std) = self.split(&out);
        let log_std_clamped = raw_log_std.mapv(|v| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&v));
        let log_std = raw_log_std.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let std = log_std.mapv(f64::exp);
        let (b, d) = mean.dim();
        let noise = Array2::from_shape_simple_fn((b, d), || StandardNormal.sample(rng));
        let pre_tanh = &mean + &(&std * &noise);
        let actions = pre_tanh.mapv(f64::tanh);
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let log_probs = Array1::from_shape_fn(b, |i| {
            (0..d)
                .map(|j| {
                    let e = noise[[i, j]];
                    -0.5 * e * e - log_std[[i, j]] - half_log_2pi - log_one_minus_tanh_sq(pre_tanh[[i, j]])
                })
                .sum()
        });
        Ok(PolicySample {
            actions,
            log_probs,
            noise,
            std,
            log_std_clamped,
            tape,
        })
    }

    /// Trunk gradients of a loss with partials `d_actions` (per action entry)
    /// and `d_log_probs` (per sample) through the reparameterised sample.
    pub fn backward(
        &self,
        sample: &PolicySample,
        d_actions: ArrayView2<f64>,
        d_log_probs: ArrayView1<f64>,
    ) -> Result<Gradients, SacError> {
        let (b, d) = sample.actions.dim();
        if d_actions.dim() != (b, d) || d_log_probs.len() != b {
            return Err(SacError::Config("policy gradient shape mismatch".into()));
        }
        let mut grad_out = Array2::zeros((b, 2 * d));
        for i in 0..b {
            for j in 0..d {
                let a = sample.actions[[i, j]];
                let da = d_actions[[i, j]] * (1.0 - a * a);
                let dlp = d_log_probs[i];
                let std_eps = sample.std[[i, j]] * sample.noise[[i, j]];
                // d logp / d mean = 2a ; d logp / d log_std = -1 + 2a * std * eps
                grad_out[[i, j]] = da + dlp * 2.0 * a;
                grad_out[[i, d + j]] = if sample.log_std_clamped[[i, j]] {
                    0.0
                } else {
                    da * std_eps + dlp * (-1.0 + 2.0 * a * std_eps)
                };
            }
        }
        Ok(self.trunk.backward(&sample.tape, grad_out.view())?)
    }
}
