//! On-disk run layout.
//!
//! ```text
//! <out>/config.toml            resolved config
//! <out>/summary.json
//! <out>/seed_<s>/metrics.csv   one row per iteration
//! <out>/seed_<s>/grid.csv      last robustness grid
//! <out>/seed_<s>/{protagonist,adversary}.json
//! <out>/plots/{robustness,heatmap}.svg
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;
use crate::harness::{stability_metric, CellResult, RunRecord, TrainOutcome, WorstCaseReport};
use crate::plot;
use crate::sac::SacError;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] SacError),
    #[error("nothing to export: {0}")]
    Empty(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExportError + '_ {
    move |source| ExportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn create_dir(path: &Path) -> Result<(), ExportError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExportError> {
    if rows.is_empty() {
        return Err(ExportError::Empty(format!("no rows for {}", path.display())));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ExportError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

pub fn write_metrics(path: &Path, records: &[RunRecord]) -> Result<(), ExportError> {
    write_csv(path, records)
}

pub fn read_metrics(path: &Path) -> Result<Vec<RunRecord>, ExportError> {
    read_csv(path)
}

/// Short content hash of the resolved config, stable across machines.
pub fn run_id(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.echo().as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_robustness: Option<f64>,
    pub stability_pct: Option<f64>,
    pub worst_case_return: Option<f64>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub variant: String,
    pub env: String,
    pub final_robustness: Option<f64>,
    pub stability_pct: Option<f64>,
    pub worst_case_return: Option<f64>,
    pub per_seed: Vec<SeedSummary>,
    pub config: RunConfig,
}

fn mean_some(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Summary {
    /// `worst_case` is either empty or aligned with `outcomes`.
    pub fn build(cfg: &RunConfig, outcomes: &[TrainOutcome], worst_case: &[WorstCaseReport]) -> Self {
        let per_seed: Vec<SeedSummary> = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| SeedSummary {
                seed: o.seed,
                final_robustness: o.final_robustness(),
                stability_pct: stability_metric(&o.robustness_series()).ok(),
                worst_case_return: worst_case.get(i).map(|w| w.mean_return),
                wall_clock_secs: o.wall_clock_secs,
            })
            .collect();
        Self {
            run_id: run_id(cfg),
            variant: cfg.variant.to_string(),
            env: cfg.env.to_string(),
            final_robustness: mean_some(per_seed.iter().map(|s| s.final_robustness)),
            stability_pct: mean_some(per_seed.iter().map(|s| s.stability_pct)),
            worst_case_return: mean_some(per_seed.iter().map(|s| s.worst_case_return)),
            per_seed,
            config: cfg.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), ExportError> {
        let text = serde_json::to_string_pretty(self).map_err(|source| ExportError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, ExportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| ExportError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Writes everything for a finished multi-seed run, plots included.
pub fn export_run(
    out: &Path,
    cfg: &RunConfig,
    outcomes: &[TrainOutcome],
    worst_case: &[WorstCaseReport],
) -> Result<Summary, ExportError> {
    if outcomes.is_empty() {
        return Err(ExportError::Empty("no training runs".into()));
    }
    create_dir(out)?;
    let cfg_path = out.join("config.toml");
    fs::write(&cfg_path, cfg.echo()).map_err(io_err(&cfg_path))?;
    for o in outcomes {
        let dir = seed_dir(out, o.seed);
        create_dir(&dir)?;
        write_metrics(&dir.join("metrics.csv"), &o.records)?;
        if let Some(grid) = &o.final_grid {
            write_csv(&dir.join("grid.csv"), &grid.cells)?;
        }
        o.protagonist.save(&dir.join("protagonist.json"))?;
        o.adversary.save(&dir.join("adversary.json"))?;
    }
    let summary = Summary::build(cfg, outcomes, worst_case);
    summary.write(&out.join("summary.json"))?;
    render_plots(out)?;
    Ok(summary)
}

/// Seed directories under `out`, sorted by seed.
pub fn list_seed_dirs(out: &Path) -> Result<Vec<(u64, PathBuf)>, ExportError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(out).map_err(io_err(out))? {
        let entry = entry.map_err(io_err(out))?;
        let name = entry.file_name();
        if let Some(seed) = name
            .to_str()
            .and_then(|n| n.strip_prefix("seed_"))
            .and_then(|s| s.parse().ok())
        {
            dirs.push((seed, entry.path()));
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Regenerates `plots/` from the CSVs of a finished run. Idempotent.
pub fn render_plots(out: &Path) -> Result<Vec<PathBuf>, ExportError> {
    let seeds = list_seed_dirs(out)?;
    if seeds.is_empty() {
        return Err(ExportError::Empty(format!(
            "no seed_* directories in {}",
            out.display()
        )));
    }
    let mut runs = Vec::new();
    let mut grids = Vec::new();
    for (_, dir) in &seeds {
        runs.push(read_metrics(&dir.join("metrics.csv"))?);
        let grid = dir.join("grid.csv");
        if grid.exists() {
            grids.push(read_csv::<CellResult>(&grid)?);
        }
    }
    let plots = out.join("plots");
    create_dir(&plots)?;
    let mut written = Vec::new();
    let path = plots.join("robustness.svg");
    fs::write(&path, plot::robustness_svg(&plot::robustness_bands(&runs))).map_err(io_err(&path))?;
    written.push(path);
    if !grids.is_empty() {
        let path = plots.join("heatmap.svg");
        fs::write(&path, plot::heatmap_svg(&plot::average_grids(&grids))).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
