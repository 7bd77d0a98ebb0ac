//! Soft actor-critic with a K-critic ensemble, usable by either player.
//!
//! Both players read the same joint [`Transition`]s. The protagonist sees
//! `(a_p, r)`, the adversary sees `(a_a, -r)`; each agent's critics take
//! `concat(state, own action)` and treat the opponent as part of the
//! environment.

mod agent;
mod critic;
mod policy;
mod replay;
mod temperature;

pub use agent::{
    make_variant, ActorStats, AgentCheckpoint, AgentConfig, CriticStats, SacAgent, UpdateStats, Variant,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use critic::EnsembleCritic;
pub use policy::{tanh_gaussian_log_density, GaussianPolicy, PolicySample, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::ReplayBuffer;
pub use temperature::Temperature;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;
use crate::tdu::TduError;

#[derive(Debug, Error)]
pub enum SacError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tdu(#[from] TduError),
    #[error("replay buffer holds {len} transitions, {required} needed before updates")]
    NotReady { len: usize, required: usize },
    #[error("non-finite critic target at sample {index}")]
    NonFiniteTarget { index: usize },
    #[error("non-finite observation")]
    NonFiniteState,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Which side of the zero-sum game an agent plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Protagonist,
    Adversary,
}

impl Role {
    /// Reward multiplier: the adversary receives `-r`.
    pub fn sign(self) -> f64 {
        match self {
            Role::Protagonist => 1.0,
            Role::Adversary => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Protagonist => "protagonist",
            Role::Adversary => "adversary",
        }
    }
}

/// One joint step of the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub protagonist_action: Vec<f64>,
    pub adversary_action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True only for absorbing states; horizon truncation is not terminal.
    pub done: bool,
}

impl Transition {
    pub fn action(&self, role: Role) -> &[f64] {
        match role {
            Role::Protagonist => &self.protagonist_action,
            Role::Adversary => &self.adversary_action,
        }
    }
}

/// A minibatch seen from one player's point of view.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    /// Role-signed rewards `R = sign * r`.
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition], role: Role) -> Result<Self, SacError> {
        let first = items.first().ok_or_else(|| SacError::Config("empty batch".into()))?;
        let (b, s_dim, a_dim) = (items.len(), first.state.len(), first.action(role).len());
        let mut states = Array2::zeros((b, s_dim));
        let mut next_states = Array2::zeros((b, s_dim));
        let mut actions = Array2::zeros((b, a_dim));
        let mut rewards = Array1::zeros(b);
        let mut dones = Array1::zeros(b);
        for (i, t) in items.iter().enumerate() {
            if t.state.len() != s_dim || t.next_state.len() != s_dim || t.action(role).len() != a_dim {
                return Err(SacError::Config(format!("transition {i} has inconsistent dimensions")));
            }
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state));
            next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state));
            actions.row_mut(i).assign(&ndarray::ArrayView1::from(t.action(role)));
            rewards[i] = role.sign() * t.reward;
            dones[i] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(Self {
            states,
            actions,
            rewards,
            next_states,
            dones,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Row-wise `concat(a, b)`.
pub(crate) fn concat_cols(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[a.view(), b.view()]).expect("matching row counts")
}
