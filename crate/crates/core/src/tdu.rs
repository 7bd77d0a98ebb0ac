//! Time-varying decay uncertainty (TDU) aggregation of critic ensembles.
//!
//! Given `K` critic outputs `q_1..q_K` for the same state-action pair, the
//! optimistic aggregate is
//!
//! ```text
//! Q_E = mean(q) + beta(n) * std(q)        (std with a 1/(K-1) normaliser)
//! beta(n) = beta0 * exp(-lambda * n / N) + beta_min,   beta0 + beta_min = 1
//! ```
//!
//! where `n` is the alternating-iteration index and `N` the iteration budget.
//! The other [`AggregationMode`]s are the baselines used in ablations:
//! plain averaging, constant or linearly decaying weights, pessimistic
//! (mean minus uncertainty) schedules and minimum selection.
//!
//! All functions here are pure. Inputs are sorted before summation, which makes
//! every aggregate exactly invariant to the order of the critics.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;

#[derive(Debug, Error, PartialEq)]
pub enum TduError {
    #[error("iteration {n} outside 0..={total}")]
    Range { n: u32, total: u32 },
    #[error("mode {mode} needs at least {needed} critic values, got {got}")]
    Arity {
        mode: AggregationMode,
        needed: usize,
        got: usize,
    },
    #[error("non-finite critic value at index {index}")]
    NonFinite { index: usize },
    #[error("row {row} has {got} values, expected {expected}")]
    Shape { row: usize, expected: usize, got: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("unknown aggregation mode `{0}`")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    TduExponential,
    UncertaintyAgnostic,
    ConstantOptimistic,
    LinearDecay,
    PessimismDec,
    PessimismInc,
    PessimismMin,
    MinOfAll,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 8] = [
        AggregationMode::TduExponential,
        AggregationMode::UncertaintyAgnostic,
        AggregationMode::ConstantOptimistic,
        AggregationMode::LinearDecay,
        AggregationMode::PessimismDec,
        AggregationMode::PessimismInc,
        AggregationMode::PessimismMin,
        AggregationMode::MinOfAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::TduExponential => "tdu_exponential",
            AggregationMode::UncertaintyAgnostic => "uncertainty_agnostic",
            AggregationMode::ConstantOptimistic => "constant_optimistic",
            AggregationMode::LinearDecay => "linear_decay",
            AggregationMode::PessimismDec => "pessimism_dec",
            AggregationMode::PessimismInc => "pessimism_inc",
            AggregationMode::PessimismMin => "pessimism_min",
            AggregationMode::MinOfAll => "min_of_all",
        }
    }

    /// Min-selection modes ignore the mean/std combination.
    pub fn is_min(self) -> bool {
        matches!(self, AggregationMode::PessimismMin | AggregationMode::MinOfAll)
    }

    /// +1 for optimistic modes, -1 for the pessimistic mean-minus-std modes.
    pub fn sign(self) -> f64 {
        match self {
            AggregationMode::PessimismDec | AggregationMode::PessimismInc => -1.0,
            _ => 1.0,
        }
    }

    fn min_arity(self) -> usize {
        if self.is_min() {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationMode {
    type Err = TduError;

    fn from_str(s: &str) -> Result<Self, TduError> {
        AggregationMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TduError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TduSchedule {
    pub beta0: f64,
    pub beta_min: f64,
    pub lambda: f64,
    pub total_iterations: u32,
    pub mode: AggregationMode,
}

impl TduSchedule {
    pub const DEFAULT_BETA0: f64 = 0.85;
    pub const DEFAULT_BETA_MIN: f64 = 0.15;
    pub const DEFAULT_LAMBDA: f64 = 3.0;

    pub fn new(
        beta0: f64,
        beta_min: f64,
        lambda: f64,
        total_iterations: u32,
        mode: AggregationMode,
    ) -> Result<Self, TduError> {
        if !(beta0 > 0.0 && beta0 <= 1.0) {
            return Err(TduError::InvalidSchedule(format!("beta0 = {beta0} not in (0, 1]")));
        }
        if !(beta_min >= 0.0 && beta_min.is_finite()) {
            return Err(TduError::InvalidSchedule(format!("beta_min = {beta_min} must be >= 0")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(TduError::InvalidSchedule(format!("lambda = {lambda} must be > 0")));
        }
        if total_iterations == 0 {
            return Err(TduError::InvalidSchedule("total iterations must be positive".into()));
        }
        if matches!(mode, AggregationMode::TduExponential | AggregationMode::LinearDecay)
            && (beta0 + beta_min - 1.0).abs() > 1e-12
        {
            return Err(TduError::InvalidSchedule(format!(
                "beta0 + beta_min = {} must equal 1",
                beta0 + beta_min
            )));
        }
        Ok(Self {
            beta0,
            beta_min,
            lambda,
            total_iterations,
            mode,
        })
    }

    /// Exponential TDU schedule with the default constants.
    pub fn exponential(total_iterations: u32) -> Self {
        Self::new(
            Self::DEFAULT_BETA0,
            Self::DEFAULT_BETA_MIN,
            Self::DEFAULT_LAMBDA,
            total_iterations,
            AggregationMode::TduExponential,
        )
        .expect("default schedule is valid")
    }

    pub fn with_mode(self, mode: AggregationMode) -> Self {
        Self { mode, ..self }
    }

    /// Uncertainty weight at iteration `n` (0 is the pre-training index).
    pub fn beta(&self, n: u32) -> Result<f64, TduError> {
        if n > self.total_iterations {
            return Err(TduError::Range {
                n,
                total: self.total_iterations,
            });
        }
        let frac = f64::from(n) / f64::from(self.total_iterations);
        let decay = (-self.lambda * frac).exp();
        let floor = (-self.lambda).exp();
        Ok(match self.mode {
            AggregationMode::TduExponential => self.beta0 * decay + self.beta_min,
            AggregationMode::UncertaintyAgnostic => 0.0,
            AggregationMode::ConstantOptimistic => 1.0,
            AggregationMode::LinearDecay => 1.0 - frac,
            // Exponential shape rescaled to run exactly 1 -> 0 ...
            AggregationMode::PessimismDec => (decay - floor) / (1.0 - floor),
            // ... and its mirror 0 -> 1.
            AggregationMode::PessimismInc => (1.0 - decay) / (1.0 - floor),
            AggregationMode::PessimismMin | AggregationMode::MinOfAll => 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean: f64,
    pub std: f64,
    pub beta: f64,
    pub q_e: f64,
}

fn check_values(q: &[f64], mode: AggregationMode) -> Result<(), TduError> {
    if q.len() < mode.min_arity() {
        return Err(TduError::Arity {
            mode,
            needed: mode.min_arity(),
            got: q.len(),
        });
    }
    if let Some(index) = q.iter().position(|v| !v.is_finite()) {
        return Err(TduError::NonFinite { index });
    }
    Ok(())
}

/// Aggregates with an explicit uncertainty weight; `beta` is ignored by the
/// min-selection modes.
pub fn aggregate_with_beta(q: &[f64], mode: AggregationMode, beta: f64) -> Result<AggregateResult, TduError> {
    check_values(q, mode)?;
    let mut sorted = q.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / k;
    let std = if sorted.len() > 1 {
        let ss: f64 = sorted.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    let (beta, q_e) = if mode.is_min() {
        (0.0, sorted[0])
    } else if mode == AggregationMode::UncertaintyAgnostic {
        (0.0, mean)
    } else {
        (beta, mean + mode.sign() * beta * std)
    };
    Ok(AggregateResult { mean, std, beta, q_e })
}

pub fn aggregate(q: &[f64], schedule: &TduSchedule, n: u32) -> Result<AggregateResult, TduError> {
    let beta = schedule.beta(n)?;
    aggregate_with_beta(q, schedule.mode, beta)
}

/// Row-wise aggregation of a `batch x K` table given as rows.
pub fn aggregate_batch(
    rows: &[Vec<f64>],
    schedule: &TduSchedule,
    n: u32,
    exec: Exec,
) -> Result<Vec<AggregateResult>, TduError> {
    let beta = schedule.beta(n)?;
    if let Some(first) = rows.first() {
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != first.len()) {
            return Err(TduError::Shape {
                row,
                expected: first.len(),
                got: r.len(),
            });
        }
    }
    exec.map(rows, |r| aggregate_with_beta(r, schedule.mode, beta))
        .into_iter()
        .collect()
}

/// Row-wise aggregation of a dense `batch x K` matrix.
pub fn aggregate_matrix(
    q: ArrayView2<f64>,
    mode: AggregationMode,
    beta: f64,
) -> Result<Vec<AggregateResult>, TduError> {
    q.rows()
        .into_iter()
        .map(|row| match row.as_slice() {
            Some(s) => aggregate_with_beta(s, mode, beta),
            None => aggregate_with_beta(&row.to_vec(), mode, beta),
        })
        .collect()
}

/// Partial derivatives `d Q_E / d q_k`, in input order.
///
/// The std term is differentiated where `std > 0`; at zero spread only the
/// mean contributes. Min modes put all weight on the first minimiser.
pub fn aggregate_weights(q: &[f64], mode: AggregationMode, beta: f64) -> Result<Vec<f64>, TduError> {
    let res = aggregate_with_beta(q, mode, beta)?;
    let k = q.len() as f64;
    if mode.is_min() {
        let idx = q
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty");
        let mut w = vec![0.0; q.len()];
        w[idx] = 1.0;
        return Ok(w);
    }
    let coeff = if res.std > 0.0 {
        mode.sign() * res.beta / ((k - 1.0) * res.std)
    } else {
        0.0
    };
    Ok(q.iter().map(|v| 1.0 / k + coeff * (v - res.mean)).collect())
}
