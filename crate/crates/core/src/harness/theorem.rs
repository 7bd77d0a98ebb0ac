//! Monte-Carlo checks of the aggregate's bias and variance under i.i.d.
//! Gaussian critic noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{derive_seed, HarnessError};
use crate::exec::Exec;
use crate::tdu::{aggregate_with_beta, AggregationMode, TduSchedule};

pub const MIN_TRIALS: usize = 1000;
const CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub q_star: f64,
    pub sigma: f64,
    pub k: usize,
    pub schedule: TduSchedule,
    pub trials: usize,
    pub seed: u64,
}

impl OracleSpec {
    pub fn new(sigma: f64, k: usize, schedule: TduSchedule, trials: usize) -> Self {
        Self {
            q_star: 0.0,
            sigma,
            k,
            schedule,
            trials,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    fn of(xs: impl ExactSizeIterator<Item = f64> + Clone) -> Self {
        let n = xs.len() as f64;
        let mean = xs.clone().sum::<f64>() / n;
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
        }
    }

    pub fn within(&self, value: f64, n_se: f64) -> bool {
        (self.mean - value).abs() <= n_se * self.stderr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub trials: usize,
    pub k: usize,
    pub sigma: f64,
    /// Uncertainty weight at the last iteration.
    pub beta_final: f64,
    /// Limit of the weight as iterations grow.
    pub beta_limit: f64,
    /// `E|Q_E - Q*|` at the last iteration.
    pub abs_error: Estimate,
    pub signed_error: Estimate,
    /// `E|mu - Q*|`.
    pub mean_abs_error: Estimate,
    /// `E[sigma_Q]`.
    pub sample_std: Estimate,
    /// `E|mu - Q*| + beta_final * E[sigma_Q]`.
    pub decomposition_bound: f64,
    pub bound_holds: bool,
    pub per_trial_violations: usize,
    /// `beta_final * c4(K) * sigma`.
    pub expected_signed_error: f64,
    /// `E|Q_E - Q*|` with the limiting weight.
    pub limit_abs_error: Estimate,
    /// `sigma * sqrt(2 / (pi K))`.
    pub folded_normal: f64,
    /// `beta_limit * sigma`.
    pub literal_bound: f64,
    pub literal_bound_holds: bool,
}

impl Theorem1Report {
    pub fn signed_error_matches(&self) -> bool {
        self.signed_error.within(self.expected_signed_error, 3.0)
    }

    pub fn limit_matches_folded_normal(&self) -> bool {
        self.limit_abs_error.within(self.folded_normal, 3.0)
    }
}

/// `E[s] / sigma` for the Bessel-corrected sample std of `k` normals.
pub fn c4(k: usize) -> f64 {
    assert!(k >= 2, "c4 needs k >= 2");
    // r(k) = Gamma(k/2) / Gamma((k-1)/2), r(k+1) = (k-1) / (2 r(k))
    let mut r = 1.0 / std::f64::consts::PI.sqrt();
    for j in 2..k {
        r = (j as f64 - 1.0) / (2.0 * r);
    }
    (2.0 / (k as f64 - 1.0)).sqrt() * r
}

fn sample_chunks<T, F>(spec: &OracleSpec, exec: Exec, per_trial: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(&[f64]) -> Result<T, HarnessError> + Sync + Send,
{
    let noise = Normal::new(spec.q_star, spec.sigma).map_err(|e| HarnessError::Oracle(e.to_string()))?;
    let chunks = spec.trials.div_ceil(CHUNK);
    let parts = exec.map_indices(chunks, |c| -> Result<Vec<T>, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, c as u64));
        let len = CHUNK.min(spec.trials - c * CHUNK);
        let mut q = vec![0.0; spec.k];
        let mut dev = vec![0.0; spec.k];
        (0..len)
            .map(|_| {
                for (qi, di) in q.iter_mut().zip(dev.iter_mut()) {
                    *qi = noise.sample(&mut rng);
                    *di = *qi - spec.q_star;
                }
                per_trial(&dev)
            })
            .collect()
    });
    let mut out = Vec::with_capacity(spec.trials);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn check_spec(spec: &OracleSpec) -> Result<(), HarnessError> {
    if spec.trials < MIN_TRIALS {
        return Err(HarnessError::TooFewTrials {
            got: spec.trials,
            min: MIN_TRIALS,
        });
    }
    if spec.k < 2 {
        return Err(HarnessError::Oracle(format!(
            "K = {} but at least 2 critics are needed",
            spec.k
        )));
    }
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(HarnessError::Oracle(format!(
            "sigma = {} must be finite and >= 0",
            spec.sigma
        )));
    }
    Ok(())
}

/// Samples `trials` ensembles of `K` critics `Q_k ~ N(Q*, sigma^2)` and
/// measures the aggregate's error at the last iteration and in the limit.
pub fn validate_theorem1(spec: &OracleSpec, exec: Exec) -> Result<Theorem1Report, HarnessError> {
    check_spec(spec)?;
    let sched = &spec.schedule;
    if sched.mode != AggregationMode::TduExponential {
        return Err(HarnessError::Oracle(format!(
            "schedule mode must be {}, got {}",
            AggregationMode::TduExponential,
            sched.mode
        )));
    }
    let beta_final = sched.beta(sched.total_iterations)?;
    let beta_limit = sched.beta_min;
    let mode = sched.mode;
    // [|Q_E - Q*|, Q_E - Q*, |mu - Q*|, sigma_Q, |Q_E_limit - Q*|]
    let rows = sample_chunks(spec, exec, |dev| {
        let at_n = aggregate_with_beta(dev, mode, beta_final)?;
        let limit = aggregate_with_beta(dev, mode, beta_limit)?;
        Ok([at_n.q_e.abs(), at_n.q_e, at_n.mean.abs(), at_n.std, limit.q_e.abs()])
    })?;
    let col = |j: usize| rows.iter().map(move |r| r[j]);
    let abs_error = Estimate::of(col(0));
    let mean_abs_error = Estimate::of(col(2));
    let sample_std = Estimate::of(col(3));
    let decomposition_bound = mean_abs_error.mean + beta_final * sample_std.mean;
    let per_trial_violations = rows
        .iter()
        .filter(|r| r[0] > r[2] + beta_final * r[3] + 1e-12 * (1.0 + r[2] + r[3]))
        .count();
    let limit_abs_error = Estimate::of(col(4));
    let literal_bound = beta_limit * spec.sigma;
    Ok(Theorem1Report {
        trials: spec.trials,
        k: spec.k,
        sigma: spec.sigma,
        beta_final,
        beta_limit,
        abs_error,
        signed_error: Estimate::of(col(1)),
        mean_abs_error,
        sample_std,
        decomposition_bound,
        bound_holds: abs_error.mean <= decomposition_bound,
        per_trial_violations,
        expected_signed_error: beta_final * c4(spec.k) * spec.sigma,
        limit_abs_error,
        folded_normal: spec.sigma * (2.0 / (std::f64::consts::PI * spec.k as f64)).sqrt(),
        literal_bound,
        literal_bound_holds: limit_abs_error.mean <= literal_bound,
    })
}

/// Variance of the ensemble-mean error over the mean single-critic error
/// variance, under i.i.d. noise. Close to `1 / K`.
pub fn ensemble_variance_ratio(spec: &OracleSpec, exec: Exec) -> Result<f64, HarnessError> {
    check_spec(spec)?;
    if spec.sigma == 0.0 {
        return Err(HarnessError::Oracle("variance ratio is undefined for sigma = 0".into()));
    }
    let k = spec.k;
    let rows = sample_chunks(spec, exec, |dev| {
        let mut row = dev.to_vec();
        row.push(dev.iter().sum::<f64>() / k as f64);
        Ok(row)
    })?;
    let variance = |j: usize| {
        let e = Estimate::of(rows.iter().map(|r| r[j]));
        e.stderr.powi(2) * rows.len() as f64
    };
    let single = (0..k).map(variance).sum::<f64>() / k as f64;
    Ok(variance(k) / single)
}
