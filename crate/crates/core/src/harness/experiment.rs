//! End-to-end experiment runner.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use super::{collect_random_play, load_checkpoint, save_logs, CheckpointError, ExperimentConfig, RecordError};
use crate::executor::{run_episode, Components, EpisodeLog, EpisodeSpec, ExecError, Method};
use crate::idm::{train, IdmError, IdmModel, TrainLog};
use crate::metrics::{
    aggregate, classify_failure, instruction_follow_success, overall_success, render_table, write_failures_csv,
    write_results_csv, EpisodeOutcome, FailureRow, ResultsRow,
};
use crate::world::{Condition, Setting, WorldError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("{cell}: {source}")]
    Episode { cell: String, source: ExecError },
    #[error("random play: {0}")]
    Play(#[from] WorldError),
    #[error("training: {0}")]
    Train(#[from] IdmError),
    #[error("loading checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scene seed of one trial in one cell:
/// `splitmix64(splitmix64(root) ^ (setting | condition << 8 | trial << 16))`.
///
/// For a fixed root the map from `(setting, condition, trial)` is injective
/// for `trial < 2^48`, since the cell code is injective and splitmix64 is a
/// bijection. The method is deliberately not mixed in, so every method
/// faces the same scenes.
pub fn scene_seed(root: u64, setting: Setting, condition: Condition, trial: u64) -> u64 {
    assert!(trial < 1 << 48, "trial index out of range");
    let code = setting.code() | condition.code() << 8 | trial << 16;
    splitmix(splitmix(root) ^ code)
}

/// Scored episodes, aggregates and (optionally) the full logs, all in
/// (method, setting, condition, trial) order.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub outcomes: Vec<EpisodeOutcome>,
    pub results: Vec<ResultsRow>,
    pub failures: Vec<FailureRow>,
    pub logs: Vec<EpisodeLog>,
}

/// Loads the configured checkpoint, or trains a model from random play when
/// none is configured. Returns `None` when no method needs a model.
pub fn prepare_model(cfg: &ExperimentConfig) -> Result<Option<(IdmModel, Option<TrainLog>)>, ExperimentError> {
    if !cfg.needs_model() {
        return Ok(None);
    }
    if let Some(path) = &cfg.checkpoint {
        let (model, _) = load_checkpoint(path)?;
        if model.layout != cfg.world.layout() {
            return Err(ExperimentError::Config(format!(
                "checkpoint {} was trained for a different observation layout",
                path.display()
            )));
        }
        return Ok(Some((model, None)));
    }
    let data = collect_random_play(&cfg.world, &cfg.play)?;
    let (model, log) = train(&data, cfg.world.layout(), cfg.world.bounds, &cfg.train, cfg.train_seed)?;
    Ok(Some((model, Some(log))))
}

/// Runs every (method, setting, condition, trial) episode. Episodes run in
/// parallel; results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, model: Option<&IdmModel>) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate().map_err(ExperimentError::Config)?;
    if cfg.needs_model() && model.is_none() {
        return Err(ExperimentError::Config("a model is required for the selected methods".into()));
    }
    let comps = Components {
        world: &cfg.world,
        planner: &cfg.planner,
        model,
        smoother: &cfg.smoother,
        lowlevel: &cfg.lowlevel,
        metrics: &cfg.metrics,
        exec: &cfg.executor,
    };
    let mut jobs: Vec<(Method, Setting, Condition, u64)> = Vec::new();
    for &m in &cfg.methods {
        for &s in &cfg.settings {
            for &c in &cfg.conditions {
                jobs.extend((0..cfg.trials as u64).map(|t| (m, s, c, t)));
            }
        }
    }
    jobs.sort();
    jobs.dedup();

    let run = |&(m, s, c, t): &(Method, Setting, Condition, u64)| {
        let spec = EpisodeSpec {
            setting: s,
            condition: c,
            scene_seed: scene_seed(cfg.root_seed, s, c, t),
        };
        run_episode(m, &comps, &spec).map_err(|source| ExperimentError::Episode {
            cell: format!("{m}/{s}/{c}/trial {t}"),
            source,
        })
    };
    let logs: Vec<EpisodeLog> = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::Config(e.to_string()))?
            .install(|| jobs.par_iter().map(run).collect::<Result<_, _>>())?,
        None => jobs.par_iter().map(run).collect::<Result<_, _>>()?,
    };

    let outcomes: Vec<EpisodeOutcome> = jobs
        .iter()
        .zip(&logs)
        .map(|(&(m, s, c, t), log)| EpisodeOutcome {
            method: m.to_string(),
            setting: s.to_string(),
            condition: c.to_string(),
            trial: t,
            instruction: instruction_follow_success(log, &cfg.metrics),
            overall: overall_success(log, &cfg.metrics),
            failure: classify_failure(log, &cfg.metrics, log.plan_meta.as_ref()),
        })
        .collect();
    let (results, failures) = aggregate(&outcomes);
    Ok(ExperimentOutput {
        outcomes,
        results,
        failures,
        logs,
    })
}

fn create(path: &Path) -> Result<fs::File, ExperimentError> {
    fs::File::create(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `results.csv`, `failures.csv`, `results.txt` and, when enabled,
/// `episodes.jsonl` into `dir`. Returns the paths written.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &ExperimentOutput) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let results = dir.join("results.csv");
    write_results_csv(&out.results, create(&results)?).map_err(|source| ExperimentError::Csv {
        path: results.clone(),
        source,
    })?;
    let failures = dir.join("failures.csv");
    write_failures_csv(&out.failures, create(&failures)?).map_err(|source| ExperimentError::Csv {
        path: failures.clone(),
        source,
    })?;
    let table = dir.join("results.txt");
    fs::write(&table, render_table(&out.results)).map_err(|source| ExperimentError::Io {
        path: table.clone(),
        source,
    })?;
    let mut written = vec![results, failures, table];
    if cfg.write_logs {
        let logs = dir.join("episodes.jsonl");
        save_logs(&logs, cfg.world.layout().width(), &out.logs)?;
        written.push(logs);
    }
    Ok(written)
}
