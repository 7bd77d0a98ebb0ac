use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::eval::{robustness_eval, RobustnessReport};
use super::{derive_seed, HarnessError, RunRecord};
use crate::config::RunConfig;
use crate::exec::Exec;
use crate::game::{AdversarialGame, Environment, EpisodeResult};
use crate::nn::NnError;
use crate::sac::{ReplayBuffer, Role, SacAgent, SacError, Transition};
use crate::tdu::TduError;

/// Counts of the contracts checked during a run. Any violation aborts the
/// run, so reaching the end means all of them held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContractChecks {
    pub zero_sum_episodes: usize,
    pub frozen_phases: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    pub protagonist: SacAgent,
    pub adversary: SacAgent,
    pub records: Vec<RunRecord>,
    /// Per-cell breakdown of the last robustness evaluation.
    pub final_grid: Option<RobustnessReport>,
    pub checks: ContractChecks,
    pub wall_clock_secs: f64,
}

impl TrainOutcome {
    pub fn robustness_series(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.robustness).collect()
    }

    pub fn final_robustness(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.robustness)
    }
}

#[derive(Debug, Default)]
pub(crate) struct PhaseStats {
    pub episodes: Vec<EpisodeResult>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha_loss: Option<f64>,
}

fn mean_of(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn is_divergence(e: &SacError) -> bool {
    matches!(
        e,
        SacError::NonFiniteTarget { .. }
            | SacError::NonFiniteState
            | SacError::Tdu(TduError::NonFinite { .. })
            | SacError::Nn(NnError::NonFiniteGradient { .. } | NnError::NonFiniteInput)
    )
}

/// Plays `episodes` episodes with `learner` updating after every step and
/// `frozen` only acting. Both act stochastically.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_phase(
    env: &mut Environment,
    learner: &mut SacAgent,
    frozen: &SacAgent,
    buffer: &mut ReplayBuffer,
    episodes: usize,
    n: u32,
    rng: &mut ChaCha8Rng,
    checks: &mut ContractChecks,
) -> Result<PhaseStats, HarnessError> {
    let diverged = |reason: String| HarnessError::Diverged {
        iteration: n,
        reason,
        checkpoint: None,
    };
    let role = learner.role();
    let mut stats = PhaseStats::default();
    let (mut critic, mut actor, mut alpha) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        let (mut ret_p, mut ret_a, mut length) = (0.0, 0.0, 0usize);
        loop {
            let (a_p, a_a) = match role {
                Role::Protagonist => {
                    let a_p = learner.act(&obs, false, rng)?;
                    (a_p, frozen.act(&obs, false, rng)?)
                }
                Role::Adversary => {
                    let a_p = frozen.act(&obs, false, rng)?;
                    (a_p, learner.act(&obs, false, rng)?)
                }
            };
            if a_p.iter().chain(&a_a).any(|v| !v.is_finite()) {
                return Err(diverged(format!("{} policy produced a non-finite action", role.name())));
            }
            let out = env.step(&a_p, &a_a)?;
            ret_p += out.reward;
            ret_a += -out.reward;
            length += 1;
            buffer.push(Transition {
                state: obs,
                protagonist_action: a_p,
                adversary_action: a_a,
                reward: out.reward,
                next_state: out.observation.clone(),
                done: out.terminal,
            });
            obs = out.observation;
            match learner.update(buffer, n, rng) {
                Ok(Some(u)) => {
                    if !u.critic_loss.is_finite() {
                        return Err(diverged(format!("{} critic loss is {}", role.name(), u.critic_loss)));
                    }
                    critic.push(u.critic_loss);
                    if let Some(l) = u.actor_loss {
                        if !l.is_finite() {
                            return Err(diverged(format!("{} actor loss is {l}", role.name())));
                        }
                        actor.push(l);
                    }
                    if let Some(l) = u.alpha_loss {
                        alpha.push(l);
                    }
                }
                Ok(None) => {}
                Err(e) if is_divergence(&e) => return Err(diverged(format!("{} update: {e}", role.name()))),
                Err(e) => return Err(e.into()),
            }
            if out.done {
                break;
            }
        }
        if ret_p + ret_a != 0.0 {
            return Err(HarnessError::ZeroSum {
                iteration: n,
                protagonist: ret_p,
                adversary: ret_a,
            });
        }
        checks.zero_sum_episodes += 1;
        let (mass_scale, friction_scale) = env.params();
        stats.episodes.push(EpisodeResult {
            protagonist_return: ret_p,
            adversary_return: ret_a,
            length,
            mass_scale,
            friction_scale,
        });
    }
    stats.critic_loss = mean_of(&critic);
    stats.actor_loss = mean_of(&actor);
    stats.alpha_loss = mean_of(&alpha);
    Ok(stats)
}

/// Runs a phase and asserts `frozen` is bitwise unchanged afterwards.
#[allow(clippy::too_many_arguments)]
pub(crate) fn checked_phase(
    env: &mut Environment,
    learner: &mut SacAgent,
    frozen: &SacAgent,
    buffer: &mut ReplayBuffer,
    episodes: usize,
    n: u32,
    rng: &mut ChaCha8Rng,
    checks: &mut ContractChecks,
) -> Result<PhaseStats, HarnessError> {
    let before = frozen.clone();
    let stats = run_phase(env, learner, frozen, buffer, episodes, n, rng, checks)?;
    if !before.same_parameters(frozen) {
        return Err(HarnessError::FrozenPhase {
            iteration: n,
            role: frozen.role().name(),
        });
    }
    checks.frozen_phases += 1;
    Ok(stats)
}

fn save_diagnostics(dir: &Path, p: &SacAgent, a: &SacAgent) -> Option<PathBuf> {
    let dir = dir.join("diagnostic");
    std::fs::create_dir_all(&dir).ok()?;
    p.save(&dir.join("protagonist.json")).ok()?;
    a.save(&dir.join("adversary.json")).ok()?;
    Some(dir)
}

/// Alternating training for one seed. Each iteration first trains the
/// adversary against the frozen protagonist, then the reverse; robustness is
/// evaluated every `eval_interval` iterations and after the last one.
/// On divergence both agents are written to `diagnostics/diagnostic/`.
pub fn train(cfg: &RunConfig, seed: u64, diagnostics: Option<&Path>) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let exec = cfg.exec();
    let mut env = cfg.environment()?;
    let spec = env.spec().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pc = cfg.agent_config(spec.obs_dim, spec.protagonist_action_dim)?;
    let ac = cfg.agent_config(spec.obs_dim, spec.adversary_action_dim)?;
    let mut protagonist = SacAgent::new(pc, Role::Protagonist, &mut rng)?.with_exec(exec);
    let mut adversary = SacAgent::new(ac, Role::Adversary, &mut rng)?.with_exec(exec);
    // One buffer of joint transitions; each agent samples its own view.
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.initial_replay, cfg.warmup)?;
    let cells = spec.sweep_cells();
    let mut checks = ContractChecks::default();
    let mut records = Vec::with_capacity(cfg.iterations as usize);
    let mut final_grid = None;

    for n in 1..=cfg.iterations {
        let phases = checked_phase(
            &mut env,
            &mut adversary,
            &protagonist,
            &mut buffer,
            cfg.episodes_per_iteration,
            n,
            &mut rng,
            &mut checks,
        )
        .and_then(|a| {
            let p = checked_phase(
                &mut env,
                &mut protagonist,
                &adversary,
                &mut buffer,
                cfg.episodes_per_iteration,
                n,
                &mut rng,
                &mut checks,
            )?;
            Ok((a, p))
        });
        let (a_phase, p_phase) = match phases {
            Ok(x) => x,
            Err(HarnessError::Diverged { iteration, reason, .. }) => {
                let checkpoint = diagnostics.and_then(|d| save_diagnostics(d, &protagonist, &adversary));
                return Err(HarnessError::Diverged {
                    iteration,
                    reason,
                    checkpoint,
                });
            }
            Err(e) => return Err(e),
        };

        let robustness = if n % cfg.eval_interval == 0 || n == cfg.iterations {
            let report = robustness_eval(
                protagonist.policy(),
                &env,
                &cells,
                cfg.eval_episodes,
                derive_seed(seed, u64::from(n)),
                exec,
            )?;
            let score = report.score;
            final_grid = Some(report);
            Some(score)
        } else {
            None
        };

        let mean_ret =
            |eps: &[EpisodeResult], f: fn(&EpisodeResult) -> f64| eps.iter().map(f).sum::<f64>() / eps.len() as f64;
        records.push(RunRecord {
            iteration: n,
            beta: protagonist.schedule().beta(n)?,
            protagonist_return: mean_ret(&p_phase.episodes, |e| e.protagonist_return),
            adversary_return: mean_ret(&a_phase.episodes, |e| e.adversary_return),
            robustness,
            protagonist_critic_loss: p_phase.critic_loss,
            protagonist_actor_loss: p_phase.actor_loss,
            protagonist_alpha_loss: p_phase.alpha_loss,
            adversary_critic_loss: a_phase.critic_loss,
            adversary_actor_loss: a_phase.actor_loss,
            adversary_alpha_loss: a_phase.alpha_loss,
            protagonist_alpha: protagonist.temperature().alpha(),
            adversary_alpha: adversary.temperature().alpha(),
        });
        log::debug!("seed {seed} iteration {n}: robustness {robustness:?}");
    }

    Ok(TrainOutcome {
        seed,
        protagonist,
        adversary,
        records,
        final_grid,
        checks,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Trains every configured seed. Seeds are independent and run through `exec`.
pub fn train_seeds(cfg: &RunConfig, diagnostics: Option<&Path>) -> Result<Vec<TrainOutcome>, HarnessError> {
    let exec = cfg.exec();
    exec.map(&cfg.seeds, |&seed| {
        let dir = diagnostics.map(|d| d.join(format!("seed_{seed}")));
        train(cfg, seed, dir.as_deref())
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSweepEntry {
    pub k: usize,
    /// Final robustness per configured seed, in seed order.
    pub per_seed: Vec<f64>,
    pub mean: f64,
}

/// Trains the configured variant for every K in `ks` and every seed.
pub fn sweep_k(cfg: &RunConfig, ks: &[usize], exec: Exec) -> Result<Vec<KSweepEntry>, HarnessError> {
    let jobs: Vec<(usize, u64)> = ks
        .iter()
        .flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let results = exec.map(&jobs, |&(k, seed)| -> Result<f64, HarnessError> {
        let c = RunConfig { k, ..cfg.clone() };
        let out = train(&c, seed, None)?;
        out.final_robustness()
            .ok_or_else(|| HarnessError::InsufficientData("run produced no robustness evaluation".into()))
    });
    let mut scores = results.into_iter();
    ks.iter()
        .map(|&k| {
            let per_seed = scores.by_ref().take(cfg.seeds.len()).collect::<Result<Vec<f64>, _>>()?;
            let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
            Ok(KSweepEntry { k, per_seed, mean })
        })
        .collect()
}
