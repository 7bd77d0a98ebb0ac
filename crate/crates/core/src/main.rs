use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use uacer::config::RunConfig;
use uacer::exec::init_workers_from_env;
use uacer::export::{self, ExportError, Summary};
use uacer::harness::{self, OracleSpec};
use uacer::sac::{SacAgent, Variant};
use uacer::tdu::{AggregationMode, TduSchedule};

/// Robust adversarial RL with uncertainty-aware critic ensembles.
///
/// Set UACER_WORKERS to bound the worker pool.
#[derive(Parser)]
#[command(name = "uacer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Alternating adversarial training over the configured seeds.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Skip training a fresh adversary against the final protagonist.
        #[arg(long)]
        no_worstcase: bool,
    },
    /// Adversary-free robustness sweep of a saved protagonist.
    EvalRobustness {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Trains a fresh adversary against a saved protagonist and evaluates it.
    EvalWorstcase {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Monte-Carlo check of the aggregate's bias under Gaussian critic noise.
    ValidateTheorem1 {
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = TduSchedule::DEFAULT_BETA0)]
        beta0: f64,
        #[arg(long, default_value_t = TduSchedule::DEFAULT_BETA_MIN)]
        beta_min: f64,
        #[arg(long, default_value_t = TduSchedule::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = 200)]
        iterations: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Trains once per ensemble size and reports final robustness per K.
    SweepK {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated ensemble sizes; defaults to the config's k_sweep.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Regenerates the SVG plots of a finished run directory.
    Plot {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    k: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(v) = &self.variant {
            cfg.variant = v.parse::<Variant>()?;
        }
        if let Some(e) = &self.env {
            cfg.env = e.parse()?;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn load_protagonist(path: &Path) -> Result<SacAgent> {
    SacAgent::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn train(run: &RunArgs, no_worstcase: bool) -> Result<()> {
    let cfg = run.resolve()?;
    let out = cfg.out_dir.clone();
    export::create_dir(&out)?;
    eprintln!("{}", cfg.echo());
    let outcomes = harness::train_seeds(&cfg, Some(&out))?;
    let worst = if no_worstcase {
        Vec::new()
    } else {
        cfg.exec()
            .map(&outcomes, |o| {
                harness::final_adversarial_eval(&o.protagonist, &cfg, o.seed)
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?
    };
    let summary = export::export_run(&out, &cfg, &outcomes, &worst)?;
    print_json(&summary)
}

fn eval_robustness(run: &RunArgs, checkpoint: &Path) -> Result<()> {
    let cfg = run.resolve()?;
    let agent = load_protagonist(checkpoint)?;
    let env = cfg.environment()?;
    let spec = uacer::game::AdversarialGame::spec(&env);
    if agent.config().obs_dim != spec.obs_dim || agent.config().action_dim != spec.protagonist_action_dim {
        bail!(
            "checkpoint {} does not fit environment {}",
            checkpoint.display(),
            spec.name
        );
    }
    let seed = cfg.seeds[0];
    let report = harness::robustness_eval(
        agent.policy(),
        &env,
        &spec.sweep_cells(),
        cfg.eval_episodes,
        seed,
        cfg.exec(),
    )?;
    if let Some(o) = &run.out {
        export::create_dir(o)?;
        write_json(&o.join("robustness.json"), &report)?;
    }
    print_json(&report)
}

fn eval_worstcase(run: &RunArgs, checkpoint: &Path) -> Result<()> {
    let cfg = run.resolve()?;
    let report = harness::final_adversarial_eval_from_checkpoint(checkpoint, &cfg, cfg.seeds[0])?;
    if let Some(o) = &run.out {
        export::create_dir(o)?;
        write_json(&o.join("worstcase.json"), &report)?;
    }
    print_json(&report)
}

#[allow(clippy::too_many_arguments)]
fn validate_theorem1(
    sigma: f64,
    k: usize,
    trials: usize,
    beta0: f64,
    beta_min: f64,
    lambda: f64,
    iterations: u32,
    seed: u64,
) -> Result<()> {
    let schedule = TduSchedule::new(beta0, beta_min, lambda, iterations, AggregationMode::TduExponential)?;
    let spec = OracleSpec {
        seed,
        ..OracleSpec::new(sigma, k, schedule, trials)
    };
    let report = harness::validate_theorem1(&spec, uacer::Exec::Parallel)?;
    print_json(&report)
}

#[derive(serde::Serialize)]
struct SweepRow {
    k: usize,
    mean_final_robustness: f64,
    per_seed: String,
}

fn sweep_k(run: &RunArgs, ks: Option<&[usize]>) -> Result<()> {
    let cfg = run.resolve()?;
    let ks = ks.map(<[usize]>::to_vec).unwrap_or_else(|| cfg.k_sweep.clone());
    let entries = harness::sweep_k(&cfg, &ks, cfg.exec())?;
    let rows: Vec<SweepRow> = entries
        .iter()
        .map(|e| SweepRow {
            k: e.k,
            mean_final_robustness: e.mean,
            per_seed: e.per_seed.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        })
        .collect();
    export::create_dir(&cfg.out_dir)?;
    export::write_csv(&cfg.out_dir.join("sweep_k.csv"), &rows)?;
    for r in &rows {
        println!("k = {:>2}  final robustness {:.3}", r.k, r.mean_final_robustness);
    }
    Ok(())
}

fn plot(run: &Path) -> Result<()> {
    let written = export::render_plots(run)?;
    match Summary::read(&run.join("summary.json")) {
        Ok(s) => eprintln!("run {} ({} on {})", s.run_id, s.variant, s.env),
        Err(ExportError::Io { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_workers_from_env();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { run, no_worstcase } => train(run, *no_worstcase),
        Command::EvalRobustness { run, checkpoint } => eval_robustness(run, checkpoint),
        Command::EvalWorstcase { run, checkpoint } => eval_worstcase(run, checkpoint),
        Command::ValidateTheorem1 {
            sigma,
            k,
            trials,
            beta0,
            beta_min,
            lambda,
            iterations,
            seed,
        } => validate_theorem1(*sigma, *k, *trials, *beta0, *beta_min, *lambda, *iterations, *seed),
        Command::SweepK { run, ks } => sweep_k(run, ks.as_deref()),
        Command::Plot { run } => plot(run),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
