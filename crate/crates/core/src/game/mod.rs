//! Two-player zero-sum continuous-control games.
//!
//! The protagonist maximises the shared reward `r`; the adversary pushes a
//! bounded disturbance `f_max * a_a` into the same dynamics and is credited
//! `-r`. Physical parameters can be rescaled for robustness sweeps and the
//! adversary channel can be switched off for evaluation.

mod pendulum;
mod point_mass;

pub use pendulum::{wrap_angle, AdversarialPendulum};
pub use point_mass::AdversarialPointMass;

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sac::{GaussianPolicy, SacAgent};

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("step called after the episode ended")]
    EpisodeOver,
    #[error("{what} = {value} must be positive")]
    Range { what: &'static str, value: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("policy error: {0}")]
    Policy(String),
}

/// Static description of a game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub name: String,
    pub obs_dim: usize,
    pub protagonist_action_dim: usize,
    pub adversary_action_dim: usize,
    pub f_max: f64,
    pub horizon: usize,
    pub gamma: f64,
    pub nominal_mass: f64,
    pub nominal_friction: f64,
    /// Multipliers of the nominal mass swept during robustness evaluation.
    pub mass_grid: Vec<f64>,
    /// Multipliers of the nominal friction swept during robustness evaluation.
    pub friction_grid: Vec<f64>,
}

impl GameSpec {
    pub const DEFAULT_HORIZON: usize = 500;
    pub const DEFAULT_GAMMA: f64 = 0.99;
    pub const DEFAULT_GRID: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

    pub fn validate(&self) -> Result<(), GameError> {
        if self.f_max.is_nan() || self.f_max <= 0.0 {
            return Err(GameError::Range {
                what: "f_max",
                value: self.f_max,
            });
        }
        if self.horizon == 0 {
            return Err(GameError::Config("horizon must be positive".into()));
        }
        if !self.mass_grid.contains(&1.0) || !self.friction_grid.contains(&1.0) {
            return Err(GameError::Config(
                "sweep grids must contain the nominal scale 1.0".into(),
            ));
        }
        Ok(())
    }

    /// Cartesian product of the mass and friction scale grids.
    pub fn sweep_cells(&self) -> Vec<(f64, f64)> {
        self.mass_grid
            .iter()
            .flat_map(|&m| self.friction_grid.iter().map(move |&c| (m, c)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Episode over, either absorbing or at the horizon.
    pub done: bool,
    /// Absorbing state (no bootstrapping past it).
    pub terminal: bool,
}

pub trait AdversarialGame: Send + Sync {
    fn spec(&self) -> &GameSpec;

    /// Starts a new episode and returns the first observation.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Advances one step. Out-of-range actions are clamped to `[-1, 1]`.
    fn step(&mut self, protagonist: &[f64], adversary: &[f64]) -> Result<StepOutcome, GameError>;

    fn set_params(&mut self, mass_scale: f64, friction_scale: f64) -> Result<(), GameError>;

    fn params(&self) -> (f64, f64);

    fn set_adversary_enabled(&mut self, enabled: bool);

    fn observation(&self) -> Vec<f64>;

    /// The disturbance applied during the most recent step.
    fn last_adversary_force(&self) -> &[f64];
}

pub(crate) fn check_scales(mass_scale: f64, friction_scale: f64) -> Result<(), GameError> {
    if !(mass_scale > 0.0 && mass_scale.is_finite()) {
        return Err(GameError::Range {
            what: "mass_scale",
            value: mass_scale,
        });
    }
    if !(friction_scale >= 0.0 && friction_scale.is_finite()) {
        return Err(GameError::Range {
            what: "friction_scale",
            value: friction_scale,
        });
    }
    Ok(())
}

pub(crate) fn clamp_action(action: &[f64], dim: usize, who: &str) -> Result<Vec<f64>, GameError> {
    if action.len() != dim {
        return Err(GameError::Config(format!(
            "{who} action has {} entries, expected {dim}",
            action.len()
        )));
    }
    if action.iter().any(|v| v.is_nan()) {
        return Err(GameError::Policy(format!("{who} action contains NaN")));
    }
    if action.iter().any(|v| v.abs() > 1.0) {
        log::warn!("{who} action {action:?} outside [-1, 1], clamping");
    }
    Ok(action.iter().map(|v| v.clamp(-1.0, 1.0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    PointMass,
    Pendulum,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointMass => "point_mass",
            EnvKind::Pendulum => "pendulum",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, GameError> {
        match s {
            "point_mass" => Ok(EnvKind::PointMass),
            "pendulum" => Ok(EnvKind::Pendulum),
            other => Err(GameError::Config(format!(
                "unknown environment `{other}` (expected point_mass or pendulum)"
            ))),
        }
    }
}

/// Optional overrides of a game's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvOverrides {
    pub f_max: Option<f64>,
    pub horizon: Option<usize>,
    pub mass_grid: Option<Vec<f64>>,
    pub friction_grid: Option<Vec<f64>>,
}

/// Either built-in game, dispatched statically.
#[derive(Debug, Clone)]
pub enum Environment {
    PointMass(AdversarialPointMass),
    Pendulum(AdversarialPendulum),
}

impl Environment {
    pub fn new(kind: EnvKind, overrides: &EnvOverrides) -> Result<Self, GameError> {
        let mut env = match kind {
            EnvKind::PointMass => Environment::PointMass(AdversarialPointMass::default()),
            EnvKind::Pendulum => Environment::Pendulum(AdversarialPendulum::default()),
        };
        let spec = env.spec_mut();
        if let Some(f) = overrides.f_max {
            spec.f_max = f;
        }
        if let Some(h) = overrides.horizon {
            spec.horizon = h;
        }
        if let Some(g) = &overrides.mass_grid {
            spec.mass_grid = g.clone();
        }
        if let Some(g) = &overrides.friction_grid {
            spec.friction_grid = g.clone();
        }
        env.spec().validate()?;
        Ok(env)
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            Environment::PointMass(_) => EnvKind::PointMass,
            Environment::Pendulum(_) => EnvKind::Pendulum,
        }
    }

    fn spec_mut(&mut self) -> &mut GameSpec {
        match self {
            Environment::PointMass(e) => e.spec_mut(),
            Environment::Pendulum(e) => e.spec_mut(),
        }
    }

    fn inner(&self) -> &dyn AdversarialGame {
        match self {
            Environment::PointMass(e) => e,
            Environment::Pendulum(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn AdversarialGame {
        match self {
            Environment::PointMass(e) => e,
            Environment::Pendulum(e) => e,
        }
    }
}

impl AdversarialGame for Environment {
    fn spec(&self) -> &GameSpec {
        self.inner().spec()
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner_mut().reset(rng)
    }

    fn step(&mut self, protagonist: &[f64], adversary: &[f64]) -> Result<StepOutcome, GameError> {
        self.inner_mut().step(protagonist, adversary)
    }

    fn set_params(&mut self, mass_scale: f64, friction_scale: f64) -> Result<(), GameError> {
        self.inner_mut().set_params(mass_scale, friction_scale)
    }

    fn params(&self) -> (f64, f64) {
        self.inner().params()
    }

    fn set_adversary_enabled(&mut self, enabled: bool) {
        self.inner_mut().set_adversary_enabled(enabled)
    }

    fn observation(&self) -> Vec<f64> {
        self.inner().observation()
    }

    fn last_adversary_force(&self) -> &[f64] {
        self.inner().last_adversary_force()
    }
}

/// Anything that maps observations to actions in `[-1, 1]^d`.
pub trait Actor: Sync {
    fn action_dim(&self) -> usize;
    fn act(&self, obs: &[f64], deterministic: bool, rng: &mut dyn RngCore) -> Result<Vec<f64>, GameError>;
}

impl Actor for GaussianPolicy {
    fn action_dim(&self) -> usize {
        GaussianPolicy::action_dim(self)
    }

    fn act(&self, obs: &[f64], deterministic: bool, rng: &mut dyn RngCore) -> Result<Vec<f64>, GameError> {
        GaussianPolicy::act(self, obs, deterministic, rng).map_err(|e| GameError::Policy(e.to_string()))
    }
}

impl Actor for SacAgent {
    fn action_dim(&self) -> usize {
        self.policy().action_dim()
    }

    fn act(&self, obs: &[f64], deterministic: bool, rng: &mut dyn RngCore) -> Result<Vec<f64>, GameError> {
        SacAgent::act(self, obs, deterministic, rng).map_err(|e| GameError::Policy(e.to_string()))
    }
}

/// Always outputs the same action.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantActor(pub Vec<f64>);

impl Actor for ConstantActor {
    fn action_dim(&self) -> usize {
        self.0.len()
    }

    fn act(&self, _obs: &[f64], _deterministic: bool, _rng: &mut dyn RngCore) -> Result<Vec<f64>, GameError> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Undiscounted sum of `r`.
    pub protagonist_return: f64,
    /// Undiscounted sum of `-r`.
    pub adversary_return: f64,
    pub length: usize,
    pub mass_scale: f64,
    pub friction_scale: f64,
}

/// Plays one episode of at most `horizon` steps. With no adversary the
/// disturbance action is zero throughout.
pub fn rollout<G, P, A>(
    env: &mut G,
    protagonist: &P,
    adversary: Option<&A>,
    deterministic: bool,
    seed: u64,
) -> Result<EpisodeResult, GameError>
where
    G: AdversarialGame + ?Sized,
    P: Actor + ?Sized,
    A: Actor + ?Sized,
{
    let spec = env.spec();
    if protagonist.action_dim() != spec.protagonist_action_dim {
        return Err(GameError::Config(format!(
            "protagonist acts in {} dimensions, game expects {}",
            protagonist.action_dim(),
            spec.protagonist_action_dim
        )));
    }
    if let Some(a) = adversary {
        if a.action_dim() != spec.adversary_action_dim {
            return Err(GameError::Config(format!(
                "adversary acts in {} dimensions, game expects {}",
                a.action_dim(),
                spec.adversary_action_dim
            )));
        }
    }
    let zero = vec![0.0; spec.adversary_action_dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = env.reset(&mut rng);
    let (mass_scale, friction_scale) = env.params();
    let mut result = EpisodeResult {
        protagonist_return: 0.0,
        adversary_return: 0.0,
        length: 0,
        mass_scale,
        friction_scale,
    };
    loop {
        let a_p = protagonist.act(&obs, deterministic, &mut rng)?;
        let a_a = match adversary {
            Some(a) => a.act(&obs, deterministic, &mut rng)?,
            None => zero.clone(),
        };
        let out = env.step(&a_p, &a_a)?;
        result.protagonist_return += out.reward;
        result.adversary_return += -out.reward;
        result.length += 1;
        obs = out.observation;
        if out.done {
            break;
        }
    }
    Ok(result)
}
