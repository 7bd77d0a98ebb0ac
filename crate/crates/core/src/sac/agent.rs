use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{concat_cols, Batch, EnsembleCritic, GaussianPolicy, ReplayBuffer, Role, SacError, Temperature};
use crate::exec::Exec;
use crate::nn::{AdamConfig, AdamState, Gradients};
use crate::tdu::{self, AggregationMode, TduSchedule};

pub const CHECKPOINT_FORMAT: &str = "uacer-agent";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub lr_temperature: f64,
    pub initial_temperature: f64,
    pub batch_size: usize,
    pub diversity: bool,
    pub param_noise_std: f64,
    pub schedule: TduSchedule,
}

impl AgentConfig {
    /// Defaults: K = 5, 3 x 256 hidden units, gamma 0.99, tau 5e-3,
    /// learning rates 3e-4 / 1e-4 / 3e-4, alpha_0 = 5e-3, batch 256.
    pub fn new(obs_dim: usize, action_dim: usize, total_iterations: u32) -> Self {
        Self {
            obs_dim,
            action_dim,
            k: 5,
            hidden: vec![256, 256, 256],
            gamma: 0.99,
            tau: 5e-3,
            lr_critic: 3e-4,
            lr_actor: 1e-4,
            lr_temperature: 3e-4,
            initial_temperature: 5e-3,
            batch_size: 256,
            diversity: true,
            param_noise_std: 0.01,
            schedule: TduSchedule::exponential(total_iterations),
        }
    }

    fn validate(&self) -> Result<(), SacError> {
        if self.obs_dim == 0 || self.action_dim == 0 {
            return Err(SacError::Config(
                "observation and action dimensions must be positive".into(),
            ));
        }
        if self.k == 0 {
            return Err(SacError::Config("K must be at least 1".into()));
        }
        if self.k < 2 && !self.schedule.mode.is_min() {
            return Err(SacError::Config(format!(
                "aggregation {} needs K >= 2, got {}",
                self.schedule.mode, self.k
            )));
        }
        if self.batch_size == 0 {
            return Err(SacError::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(SacError::Config(format!("gamma = {} outside [0, 1)", self.gamma)));
        }
        Ok(())
    }
}

/// Named agent constructions: the full method, its ablations, and the
/// alternative uncertainty weightings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoEnsemble,
    NoTdu,
    NoDiversity,
    PessimismDec,
    PessimismInc,
    PessimismMin,
    UncertaintyAgnostic,
    ConstantOptimistic,
    LinearDecay,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Full,
        Variant::NoEnsemble,
        Variant::NoTdu,
        Variant::NoDiversity,
        Variant::PessimismDec,
        Variant::PessimismInc,
        Variant::PessimismMin,
        Variant::UncertaintyAgnostic,
        Variant::ConstantOptimistic,
        Variant::LinearDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoEnsemble => "no_ensemble",
            Variant::NoTdu => "no_tdu",
            Variant::NoDiversity => "no_diversity",
            Variant::PessimismDec => "pessimism_dec",
            Variant::PessimismInc => "pessimism_inc",
            Variant::PessimismMin => "pessimism_min",
            Variant::UncertaintyAgnostic => "uncertainty_agnostic",
            Variant::ConstantOptimistic => "constant_optimistic",
            Variant::LinearDecay => "linear_decay",
        }
    }

    /// Rewrites ensemble size, aggregation and diversity of `base`.
    pub fn apply(self, base: &AgentConfig) -> AgentConfig {
        let mut c = base.clone();
        let mode = |m: AggregationMode| base.schedule.with_mode(m);
        match self {
            Variant::Full => {
                c.schedule = mode(AggregationMode::TduExponential);
                c.diversity = true;
            }
            Variant::NoEnsemble => {
                c.k = 2;
                c.schedule = mode(AggregationMode::MinOfAll);
                c.diversity = false;
            }
            Variant::NoTdu => {
                c.schedule = mode(AggregationMode::MinOfAll);
                c.diversity = true;
            }
            Variant::NoDiversity => {
                c.schedule = mode(AggregationMode::TduExponential);
                c.diversity = false;
            }
            Variant::PessimismDec => c.schedule = mode(AggregationMode::PessimismDec),
            Variant::PessimismInc => c.schedule = mode(AggregationMode::PessimismInc),
            Variant::PessimismMin => c.schedule = mode(AggregationMode::PessimismMin),
            Variant::UncertaintyAgnostic => c.schedule = mode(AggregationMode::UncertaintyAgnostic),
            Variant::ConstantOptimistic => c.schedule = mode(AggregationMode::ConstantOptimistic),
            Variant::LinearDecay => c.schedule = mode(AggregationMode::LinearDecay),
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = SacError;

    fn from_str(s: &str) -> Result<Self, SacError> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            SacError::Config(format!("unknown variant `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Builds an agent for the named ablation on top of `base`.
pub fn make_variant<R: Rng + ?Sized>(
    variant: Variant,
    base: &AgentConfig,
    role: Role,
    rng: &mut R,
) -> Result<SacAgent, SacError> {
    SacAgent::new(variant.apply(base), role, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticStats {
    pub losses: Vec<f64>,
    /// The shared regression target every critic was fitted to.
    pub targets: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    pub log_probs: Array1<f64>,
    pub q_e: Array1<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub alpha_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacAgent {
    role: Role,
    config: AgentConfig,
    policy: GaussianPolicy,
    policy_optimizer: AdamState,
    critics: EnsembleCritic,
    temperature: Temperature,
    #[serde(skip)]
    exec: Exec,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, role: Role, rng: &mut R) -> Result<Self, SacError> {
        config.validate()?;
        let policy = GaussianPolicy::new(config.obs_dim, config.action_dim, &config.hidden, rng)?;
        let critics = EnsembleCritic::new(
            config.k,
            config.obs_dim + config.action_dim,
            &config.hidden,
            config.diversity,
            config.param_noise_std,
            config.lr_critic,
            config.tau,
            rng,
        )?;
        Self::from_parts(config, role, policy, critics)
    }

    /// Assembles an agent from hand-built networks.
    pub fn from_parts(
        config: AgentConfig,
        role: Role,
        policy: GaussianPolicy,
        critics: EnsembleCritic,
    ) -> Result<Self, SacError> {
        if policy.obs_dim() != config.obs_dim || policy.action_dim() != config.action_dim {
            return Err(SacError::Config("policy dimensions disagree with config".into()));
        }
        if critics.input_dim() != config.obs_dim + config.action_dim || critics.k() != config.k {
            return Err(SacError::Config("critic ensemble disagrees with config".into()));
        }
        let policy_optimizer = AdamState::for_mlp(policy.trunk(), AdamConfig::with_lr(config.lr_actor));
        let temperature = Temperature::new(config.initial_temperature, config.action_dim, config.lr_temperature)?;
        Ok(Self {
            role,
            config,
            policy,
            policy_optimizer,
            critics,
            temperature,
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn critics(&self) -> &EnsembleCritic {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut EnsembleCritic {
        &mut self.critics
    }

    pub fn temperature(&self) -> &Temperature {
        &self.temperature
    }

    pub fn temperature_mut(&mut self) -> &mut Temperature {
        &mut self.temperature
    }

    pub fn schedule(&self) -> &TduSchedule {
        &self.config.schedule
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>, SacError> {
        self.policy.act(obs, deterministic, rng)
    }

    /// Fits every critic to the shared soft Bellman target
    /// `y = R + gamma (1 - done) (Q_E_target(s', a') - alpha log pi(a'|s'))`,
    /// then Polyak-updates the targets.
    pub fn critic_update<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        n: u32,
        rng: &mut R,
    ) -> Result<CriticStats, SacError> {
        let beta = self.config.schedule.beta(n)?;
        let next = self.policy.sample(batch.next_states.view(), rng)?;
        let next_inputs = concat_cols(&batch.next_states, &next.actions);
        let q_next = self.critics.q_matrix(next_inputs.view(), true, self.exec)?;
        let agg = tdu::aggregate_matrix(q_next.view(), self.config.schedule.mode, beta)?;
        let alpha = self.temperature.alpha();
        let gamma = self.config.gamma;
        let mut targets = Array1::zeros(batch.len());
        for i in 0..batch.len() {
            let soft_value = agg[i].q_e - alpha * next.log_probs[i];
            let y = batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * soft_value;
            if !y.is_finite() {
                return Err(SacError::NonFiniteTarget { index: i });
            }
            targets[i] = y;
        }
        let inputs = concat_cols(&batch.states, &batch.actions);
        let losses = self.critics.regress(inputs.view(), targets.view(), self.exec)?;
        self.critics.polyak_update();
        Ok(CriticStats { losses, targets })
    }

    /// Loss `mean(alpha log pi(a|s) - Q_E(s, a))` over freshly sampled actions
    /// and its gradient w.r.t. the policy trunk. Nothing is modified.
    pub fn actor_loss_and_grad<R: Rng + ?Sized>(
        &self,
        batch: &Batch,
        n: u32,
        rng: &mut R,
    ) -> Result<(ActorStats, Gradients), SacError> {
        let beta = self.config.schedule.beta(n)?;
        let mode = self.config.schedule.mode;
        let sample = self.policy.sample(batch.states.view(), rng)?;
        let inputs = concat_cols(&batch.states, &sample.actions);
        let q = self.critics.q_matrix(inputs.view(), false, self.exec)?;
        let b = batch.len();
        let bf = b as f64;
        let alpha = self.temperature.alpha();
        let mut q_e = Array1::zeros(b);
        let mut dq = Array2::zeros(q.dim());
        for i in 0..b {
            let row = q.row(i).to_vec();
            q_e[i] = tdu::aggregate_with_beta(&row, mode, beta)?.q_e;
            for (k, w) in tdu::aggregate_weights(&row, mode, beta)?.into_iter().enumerate() {
                dq[[i, k]] = -w / bf;
            }
        }
        let loss = (0..b).map(|i| alpha * sample.log_probs[i] - q_e[i]).sum::<f64>() / bf;
        let d_actions = self
            .critics
            .action_gradient(inputs.view(), dq.view(), self.config.action_dim, self.exec)?;
        let d_log_probs = Array1::from_elem(b, alpha / bf);
        let grads = self.policy.backward(&sample, d_actions.view(), d_log_probs.view())?;
        Ok((
            ActorStats {
                loss,
                log_probs: sample.log_probs,
                q_e,
                alpha,
            },
            grads,
        ))
    }

    /// One Adam step on the policy. Critic parameters are not modified.
    pub fn actor_update<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        n: u32,
        rng: &mut R,
    ) -> Result<ActorStats, SacError> {
        let (stats, grads) = self.actor_loss_and_grad(batch, n, rng)?;
        self.policy_optimizer.step(self.policy.trunk_mut(), &grads)?;
        Ok(stats)
    }

    /// One Adam step on `log alpha` using fresh actions for the batch states.
    /// Returns `mean(-alpha (log pi + target_entropy))` before the step.
    pub fn temperature_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64, SacError> {
        let sample = self.policy.sample(batch.states.view(), rng)?;
        self.temperature.update(sample.log_probs.view())
    }

    /// One gradient step from replay, gated by the buffer's fill levels.
    /// Returns `None` when nothing was updated.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        n: u32,
        rng: &mut R,
    ) -> Result<Option<UpdateStats>, SacError> {
        if !buffer.ready_for_critic() {
            return Ok(None);
        }
        let items = buffer.sample(self.config.batch_size, rng)?;
        let batch = Batch::from_transitions(&items, self.role)?;
        let critic = self.critic_update(&batch, n, rng)?;
        let critic_loss = critic.losses.iter().sum::<f64>() / critic.losses.len() as f64;
        let mut stats = UpdateStats {
            critic_loss,
            ..UpdateStats::default()
        };
        if buffer.ready_for_actor() {
            stats.actor_loss = Some(self.actor_update(&batch, n, rng)?.loss);
            stats.alpha_loss = Some(self.temperature_update(&batch, rng)?);
        }
        Ok(Some(stats))
    }

    /// Exact equality of every learnable parameter and optimizer step count.
    pub fn same_parameters(&self, other: &SacAgent) -> bool {
        self.policy.trunk().bitwise_eq(other.policy.trunk())
            && self.critics.bitwise_eq(&other.critics)
            && self.temperature.log_alpha.to_bits() == other.temperature.log_alpha.to_bits()
            && self.policy_optimizer.step == other.policy_optimizer.step
    }

    pub fn to_checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            agent: self.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), SacError> {
        let text = serde_json::to_string(&self.to_checkpoint()).map_err(|e| SacError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| SacError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, SacError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SacError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint_str(&text)
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self, SacError> {
        let ck: AgentCheckpoint = serde_json::from_str(text).map_err(|e| SacError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(SacError::Checkpoint(format!("unexpected format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(SacError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck.agent)
    }
}

/// Versioned on-disk form of a [`SacAgent`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format: String,
    pub version: u32,
    pub agent: SacAgent,
}
