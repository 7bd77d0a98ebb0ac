use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{checked_phase, ContractChecks};
use super::{derive_seed, HarnessError};
use crate::config::RunConfig;
use crate::exec::Exec;
use crate::game::{rollout, Actor, AdversarialGame, ConstantActor, EpisodeResult};
use crate::sac::{ReplayBuffer, Role, SacAgent};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mass_scale: f64,
    pub friction_scale: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Mean over cells of the per-cell mean return.
    pub score: f64,
    pub cells: Vec<CellResult>,
}

/// Deterministic, adversary-free returns averaged over a parameter grid.
pub fn robustness_eval<G, P>(
    protagonist: &P,
    env: &G,
    cells: &[(f64, f64)],
    episodes_per_cell: usize,
    seed: u64,
    exec: Exec,
) -> Result<RobustnessReport, HarnessError>
where
    G: AdversarialGame + Clone,
    P: Actor + ?Sized,
{
    if cells.is_empty() || episodes_per_cell == 0 {
        return Err(HarnessError::InsufficientData("robustness grid is empty".into()));
    }
    let jobs = cells.len() * episodes_per_cell;
    let returns = exec.map_indices(jobs, |j| -> Result<f64, HarnessError> {
        let (mass, friction) = cells[j / episodes_per_cell];
        let mut e = env.clone();
        e.set_params(mass, friction)?;
        e.set_adversary_enabled(false);
        let r = rollout(
            &mut e,
            protagonist,
            None::<&ConstantActor>,
            true,
            derive_seed(seed, j as u64),
        )?;
        Ok(r.protagonist_return)
    });
    let returns = returns.into_iter().collect::<Result<Vec<f64>, _>>()?;
    let cells: Vec<CellResult> = cells
        .iter()
        .zip(returns.chunks(episodes_per_cell))
        .map(|(&(mass_scale, friction_scale), r)| CellResult {
            mass_scale,
            friction_scale,
            mean_return: r.iter().sum::<f64>() / r.len() as f64,
        })
        .collect();
    let score = cells.iter().map(|c| c.mean_return).sum::<f64>() / cells.len() as f64;
    Ok(RobustnessReport { score, cells })
}

/// Mean percentage decrease between consecutive robustness values.
/// Increases count as zero; pairs starting at zero are skipped.
pub fn stability_metric(series: &[f64]) -> Result<f64, HarnessError> {
    if series.len() < 2 {
        return Err(HarnessError::InsufficientData(format!(
            "stability needs at least 2 evaluations, got {}",
            series.len()
        )));
    }
    let mut drops = Vec::with_capacity(series.len() - 1);
    for (i, w) in series.windows(2).enumerate() {
        if w[0] == 0.0 {
            log::warn!("skipping stability pair {i}: zero denominator");
            continue;
        }
        drops.push(((w[0] - w[1]) / w[0].abs()).max(0.0) * 100.0);
    }
    if drops.is_empty() {
        return Err(HarnessError::InsufficientData(
            "every stability pair had a zero denominator".into(),
        ));
    }
    Ok(drops.iter().sum::<f64>() / drops.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub adversary_iterations: u32,
    pub mean_return: f64,
    pub adversary_mean_return: f64,
    pub episodes: Vec<EpisodeResult>,
}

/// Trains a fresh adversary against the frozen `protagonist` for
/// `final_adversary_iterations`, then plays `eval_episodes` deterministic
/// episodes against it.
pub fn final_adversarial_eval(
    protagonist: &SacAgent,
    cfg: &RunConfig,
    seed: u64,
) -> Result<WorstCaseReport, HarnessError> {
    let exec = cfg.exec();
    let mut env = cfg.environment()?;
    let spec = env.spec().clone();
    let pc = protagonist.config();
    if protagonist.role() != Role::Protagonist
        || pc.obs_dim != spec.obs_dim
        || pc.action_dim != spec.protagonist_action_dim
    {
        return Err(HarnessError::Incompatible(format!(
            "{} agent with {} observations and {} actions cannot play {}",
            protagonist.role().name(),
            pc.obs_dim,
            pc.action_dim,
            spec.name
        )));
    }
    let budget = cfg.final_adversary_iterations;
    let mut ac = cfg.agent_config(spec.obs_dim, spec.adversary_action_dim)?;
    ac.schedule.total_iterations = budget.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let mut adversary = SacAgent::new(ac, Role::Adversary, &mut rng)?.with_exec(exec);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.initial_replay, cfg.warmup)?;
    let mut checks = ContractChecks::default();
    for n in 1..=budget {
        checked_phase(
            &mut env,
            &mut adversary,
            protagonist,
            &mut buffer,
            cfg.episodes_per_iteration,
            n,
            &mut rng,
            &mut checks,
        )?;
    }
    let episodes = exec
        .map_indices(cfg.eval_episodes, |i| {
            let mut e = env.clone();
            rollout(&mut e, protagonist, Some(&adversary), true, derive_seed(seed, i as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let count = episodes.len() as f64;
    Ok(WorstCaseReport {
        adversary_iterations: budget,
        mean_return: episodes.iter().map(|e| e.protagonist_return).sum::<f64>() / count,
        adversary_mean_return: episodes.iter().map(|e| e.adversary_return).sum::<f64>() / count,
        episodes,
    })
}

pub fn final_adversarial_eval_from_checkpoint(
    path: &Path,
    cfg: &RunConfig,
    seed: u64,
) -> Result<WorstCaseReport, HarnessError> {
    let agent = SacAgent::load(path)?;
    final_adversarial_eval(&agent, cfg, seed)
}
