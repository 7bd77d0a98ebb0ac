//! Run configuration: a flat TOML table, strict about keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::game::{AdversarialGame, EnvKind, EnvOverrides, Environment, GameError, GameSpec};
use crate::sac::{AgentConfig, ReplayBuffer, Variant};
use crate::tdu::{AggregationMode, TduError, TduSchedule};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey { key: String, suggestion: Option<String> },
    #[error("invalid value for `{key}`: {message}")]
    Type { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Schedule(#[from] TduError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    pub f_max: Option<f64>,
    pub horizon: usize,
    pub mass_grid: Vec<f64>,
    pub friction_grid: Vec<f64>,

    pub variant: Variant,
    /// Overrides the aggregation rule implied by `variant`.
    pub aggregation: Option<AggregationMode>,
    pub k: usize,
    pub beta0: f64,
    pub beta_min: f64,
    pub lambda: f64,

    pub iterations: u32,
    pub episodes_per_iteration: usize,
    pub eval_interval: u32,
    pub eval_episodes: usize,
    pub final_adversary_iterations: u32,
    pub seeds: Vec<u64>,
    pub k_sweep: Vec<usize>,

    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub lr_temperature: f64,
    pub initial_temperature: f64,
    pub batch_size: usize,
    pub param_noise_std: f64,
    pub replay_capacity: usize,
    pub initial_replay: usize,
    pub warmup: usize,

    pub parallel: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = GameSpec::DEFAULT_GRID.to_vec();
        Self {
            env: EnvKind::PointMass,
            f_max: None,
            horizon: GameSpec::DEFAULT_HORIZON,
            mass_grid: grid.clone(),
            friction_grid: grid,
            variant: Variant::Full,
            aggregation: None,
            k: 5,
            beta0: TduSchedule::DEFAULT_BETA0,
            beta_min: TduSchedule::DEFAULT_BETA_MIN,
            lambda: TduSchedule::DEFAULT_LAMBDA,
            iterations: 200,
            episodes_per_iteration: 5,
            eval_interval: 5,
            eval_episodes: 10,
            final_adversary_iterations: 50,
            seeds: vec![0],
            k_sweep: vec![2, 3, 5, 7, 10],
            hidden: vec![256, 256, 256],
            gamma: 0.99,
            tau: 5e-3,
            lr_critic: 3e-4,
            lr_actor: 1e-4,
            lr_temperature: 3e-4,
            initial_temperature: 5e-3,
            batch_size: 256,
            param_noise_std: 0.01,
            replay_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            initial_replay: ReplayBuffer::DEFAULT_INITIAL_SIZE,
            warmup: ReplayBuffer::DEFAULT_WARMUP,
            parallel: true,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Every key accepted in a config file.
pub fn known_keys() -> Vec<String> {
    match toml::Table::try_from(RunConfig::default()) {
        Ok(t) => {
            let mut keys: Vec<String> = t.keys().cloned().collect();
            // `None` fields are dropped by the serializer.
            keys.extend(["f_max".to_string(), "aggregation".to_string()]);
            keys.sort();
            keys
        }
        Err(_) => Vec::new(),
    }
}

fn suggest(key: &str, known: &[String]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::jaro_winkler(key, k), k))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k.clone())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        let known = known_keys();
        for key in table.keys() {
            if !known.iter().any(|k| k == key) {
                return Err(ConfigError::UnknownKey {
                    key: key.clone(),
                    suggestion: suggest(key, &known),
                });
            }
        }
        // One key at a time, so a type error can name its key.
        for (key, value) in &table {
            let mut single = toml::Table::new();
            single.insert(key.clone(), value.clone());
            if let Err(e) = RunConfig::deserialize(single) {
                return Err(ConfigError::Type {
                    key: key.clone(),
                    message: e.message().to_string(),
                });
            }
        }
        let config = RunConfig::deserialize(table).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Fully resolved config as TOML. Same config, same bytes.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.schedule()?;
        self.environment()?;
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must not be empty".into()));
        }
        if self.iterations == 0 {
            return Err(ConfigError::Invalid("iterations must be positive".into()));
        }
        if self.episodes_per_iteration == 0 || self.eval_episodes == 0 {
            return Err(ConfigError::Invalid("episode counts must be positive".into()));
        }
        if self.eval_interval == 0 {
            return Err(ConfigError::Invalid("eval_interval must be positive".into()));
        }
        if self.k_sweep.contains(&0) {
            return Err(ConfigError::Invalid("k_sweep entries must be positive".into()));
        }
        if self.initial_replay > self.warmup {
            return Err(ConfigError::Invalid(format!(
                "initial_replay = {} exceeds warmup = {}",
                self.initial_replay, self.warmup
            )));
        }
        if self.warmup > self.replay_capacity {
            return Err(ConfigError::Invalid("warmup exceeds replay_capacity".into()));
        }
        let env = self.environment()?;
        self.agent_config(env.spec().obs_dim, env.spec().protagonist_action_dim)?;
        Ok(())
    }

    /// Schedule for the run, before the variant rewrites its mode.
    pub fn schedule(&self) -> Result<TduSchedule, ConfigError> {
        Ok(TduSchedule::new(
            self.beta0,
            self.beta_min,
            self.lambda,
            self.iterations,
            AggregationMode::TduExponential,
        )?)
    }

    pub fn env_overrides(&self) -> EnvOverrides {
        EnvOverrides {
            f_max: self.f_max,
            horizon: Some(self.horizon),
            mass_grid: Some(self.mass_grid.clone()),
            friction_grid: Some(self.friction_grid.clone()),
        }
    }

    pub fn environment(&self) -> Result<Environment, ConfigError> {
        Ok(Environment::new(self.env, &self.env_overrides())?)
    }

    /// Agent hyperparameters for one side, with the variant applied.
    pub fn agent_config(&self, obs_dim: usize, action_dim: usize) -> Result<AgentConfig, ConfigError> {
        let mut base = AgentConfig::new(obs_dim, action_dim, self.iterations);
        base.k = self.k;
        base.hidden = self.hidden.clone();
        base.gamma = self.gamma;
        base.tau = self.tau;
        base.lr_critic = self.lr_critic;
        base.lr_actor = self.lr_actor;
        base.lr_temperature = self.lr_temperature;
        base.initial_temperature = self.initial_temperature;
        base.batch_size = self.batch_size;
        base.param_noise_std = self.param_noise_std;
        base.schedule = self.schedule()?;
        let mut c = self.variant.apply(&base);
        if let Some(mode) = self.aggregation {
            c.schedule = c.schedule.with_mode(mode);
        }
        if c.k < 2 && !c.schedule.mode.is_min() {
            return Err(ConfigError::Invalid(format!(
                "aggregation {} needs k >= 2, got {}",
                c.schedule.mode, c.k
            )));
        }
        Ok(c)
    }
}
