//! Alternating adversarial training and the evaluation protocols built on it.

mod eval;
mod theorem;
mod train;

pub use eval::{
    final_adversarial_eval, final_adversarial_eval_from_checkpoint, robustness_eval, stability_metric, CellResult,
    RobustnessReport, WorstCaseReport,
};
pub use theorem::{ensemble_variance_ratio, validate_theorem1, OracleSpec, Theorem1Report, MIN_TRIALS};
pub use train::{sweep_k, train, train_seeds, ContractChecks, KSweepEntry, TrainOutcome};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::game::GameError;
use crate::sac::SacError;
use crate::tdu::TduError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Tdu(#[from] TduError),
    #[error("zero-sum violation in iteration {iteration}: protagonist {protagonist}, adversary {adversary}")]
    ZeroSum {
        iteration: u32,
        protagonist: f64,
        adversary: f64,
    },
    #[error("{role} parameters changed during its frozen phase in iteration {iteration}")]
    FrozenPhase { iteration: u32, role: &'static str },
    #[error("training diverged in iteration {iteration}: {reason}{}", checkpoint.as_ref().map(|p| format!(" (diagnostic checkpoint in {})", p.display())).unwrap_or_default())]
    Diverged {
        iteration: u32,
        reason: String,
        checkpoint: Option<PathBuf>,
    },
    #[error("incompatible agent: {0}")]
    Incompatible(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("refusing to run with {got} trials, at least {min} are needed")]
    TooFewTrials { got: usize, min: usize },
    #[error("invalid oracle: {0}")]
    Oracle(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One alternating iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iteration: u32,
    pub beta: f64,
    /// Mean protagonist return over its own training episodes.
    pub protagonist_return: f64,
    /// Mean adversary return over its own training episodes.
    pub adversary_return: f64,
    /// Only set on evaluation iterations.
    pub robustness: Option<f64>,
    pub protagonist_critic_loss: Option<f64>,
    pub protagonist_actor_loss: Option<f64>,
    pub protagonist_alpha_loss: Option<f64>,
    pub adversary_critic_loss: Option<f64>,
    pub adversary_actor_loss: Option<f64>,
    pub adversary_alpha_loss: Option<f64>,
    pub protagonist_alpha: f64,
    pub adversary_alpha: f64,
}

/// SplitMix64 finaliser, used to derive independent per-task seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
