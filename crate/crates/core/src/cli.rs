//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::executor::{EpisodeLog, Method};
use crate::harness::{
    collect_random_play, load_chunk, load_dataset, load_logs, positive_fraction, prepare_model, run_experiment,
    save_chunk, save_checkpoint, save_dataset, write_outputs, ChunkRecord, ExperimentConfig,
};
use crate::idm::{gradient_check, train, IdmArch, LossConfig};
use crate::smoother::{smooth, SmootherConfig};
use crate::world::{Condition, ObservationLayout, Setting};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gated-idm", version, about = "Video-plan-to-action simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collect random-play transitions into a dataset file.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
        /// Output file; defaults to <out-dir>/dataset.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on a dataset; writes a checkpoint and a loss curve.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint file; defaults to <out-dir>/model.ckpt.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Check analytic gradients against finite differences on random models.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        models: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
    },
    /// Smooth an action chunk file.
    Smooth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Use the identity configuration.
        #[arg(long)]
        neutral: bool,
    },
    /// Run an experiment and write results.csv, failures.csv and logs.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        method: Vec<Method>,
        #[arg(long)]
        setting: Vec<Setting>,
        #[arg(long)]
        condition: Vec<Condition>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print a text trace of logged episodes.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Only this episode (0-based).
        #[arg(long)]
        episode: Option<usize>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, String> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn ensure_parent(path: &Path) -> Result<(), String> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| format!("{}: {e}", d.display())),
        _ => Ok(()),
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Text trace of one episode.
pub fn render_trace(index: usize, log: &EpisodeLog) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "episode {index}: {} {} {} seed={} target={} container={} termination={} switches={:?} returns={:?}",
        log.method,
        log.task.setting,
        log.task.condition,
        log.scene_seed,
        log.task.target_id.0,
        log.task.container_id.0,
        log.termination.as_str(),
        log.switches,
        log.returns
    );
    if let Some(e) = &log.error {
        let _ = writeln!(s, "  error: {e}");
    }
    for r in &log.steps {
        let gate = r.gate.map_or("-".to_string(), |g| format!("{g:.3}"));
        let held = r.held.map_or("-".to_string(), |h| h.0.to_string());
        let q = r.queue_index.map_or("-".to_string(), |k| k.to_string());
        let _ = writeln!(
            s,
            "  {:>4} {:<8} q={:<4} ee=({:.4}, {:.4}, {:.4}) ap={:.3} gate={} held={} d_target={:.4}",
            r.step,
            match r.mode {
                crate::executor::Mode::Plan => "plan",
                crate::executor::Mode::Lowlevel => "lowlevel",
            },
            q,
            r.ee.x,
            r.ee.y,
            r.ee.z,
            r.aperture,
            gate,
            held,
            r.target_distance
        );
    }
    s
}

fn execute(cmd: Command, out: &mut dyn std::io::Write) -> Result<(), String> {
    match cmd {
        Command::Collect { common, samples, out: path } => {
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.play.seed = seed;
            }
            if let Some(n) = samples {
                cfg.play.num_samples = n;
            }
            let path = path.unwrap_or_else(|| common.out_dir.join("dataset.jsonl"));
            let data = collect_random_play(&cfg.world, &cfg.play).map_err(err)?;
            ensure_parent(&path)?;
            save_dataset(&path, cfg.world.layout().width(), &data).map_err(err)?;
            writeln!(
                out,
                "wrote {} samples ({:.1}% interaction) to {}",
                data.len(),
                100.0 * positive_fraction(&data),
                path.display()
            )
            .map_err(err)?;
        }
        Command::Train {
            common,
            data,
            out: path,
            epochs,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.train_seed = seed;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let (header, samples) = load_dataset(&data).map_err(err)?;
            let layout = cfg.world.layout();
            if header.layout_width != layout.width() {
                return Err(format!(
                    "dataset width {} does not match the configured layout width {}",
                    header.layout_width,
                    layout.width()
                ));
            }
            let (model, log) = train(&samples, layout, cfg.world.bounds, &cfg.train, cfg.train_seed).map_err(err)?;
            let path = path.unwrap_or_else(|| common.out_dir.join("model.ckpt"));
            ensure_parent(&path)?;
            save_checkpoint(&path, &model, &cfg.train.loss).map_err(err)?;
            let curve = path.with_extension("curve.csv");
            let mut w = csv::Writer::from_path(&curve).map_err(err)?;
            for p in &log.points {
                w.serialize(p).map_err(err)?;
            }
            w.flush().map_err(err)?;
            let last = log.points.last().map_or(f64::NAN, |p| p.loss);
            writeln!(out, "trained on {} samples, final loss {last:.6}; wrote {} and {}", samples.len(), path.display(), curve.display())
                .map_err(err)?;
        }
        Command::Gradcheck { seed, models, batch } => {
            let arch = IdmArch {
                encoder_hidden: vec![16, 16],
                head_hidden: 8,
            };
            let r = gradient_check(seed, models, batch, ObservationLayout::new(2, 1), &arch, &LossConfig::default())
                .map_err(err)?;
            let max = r.max_rel_error();
            writeln!(out, "max relative error {max:.3e} over {models} models x {} parameters", r.params_per_model).map_err(err)?;
            if !(max <= 1e-4) {
                return Err(format!("gradient check failed: {max:.3e} > 1e-4"));
            }
        }
        Command::Smooth {
            config,
            input,
            output,
            neutral,
        } => {
            let cfg = load_config(config.as_deref())?;
            let scfg = if neutral { SmootherConfig::neutral() } else { cfg.smoother.clone() };
            let chunk = load_chunk(&input).map_err(err)?;
            let s = smooth(&chunk.rows, &scfg).map_err(err)?;
            let gates = match &chunk.gates {
                Some(g) if g.len() == chunk.rows.len() => Some(s.source.iter().map(|&i| g[i]).collect()),
                Some(g) => return Err(format!("chunk has {} rows but {} gates", chunk.rows.len(), g.len())),
                None => None,
            };
            ensure_parent(&output)?;
            save_chunk(&output, cfg.world.layout().width(), &ChunkRecord { rows: s.rows, gates }).map_err(err)?;
            writeln!(out, "smoothed {} rows into {} (keypoints {:?})", chunk.rows.len(), s.source.len(), s.keypoints).map_err(err)?;
        }
        Command::Eval {
            common,
            trials,
            method,
            setting,
            condition,
            checkpoint,
        } => {
            let mut cfg = load_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                cfg.root_seed = seed;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if !method.is_empty() {
                cfg.methods = method;
            }
            if !setting.is_empty() {
                cfg.settings = setting;
            }
            if !condition.is_empty() {
                cfg.conditions = condition;
            }
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            cfg.validate()?;
            let model = prepare_model(&cfg).map_err(err)?;
            let result = run_experiment(&cfg, model.as_ref().map(|(m, _)| m)).map_err(err)?;
            let written = write_outputs(&common.out_dir, &cfg, &result).map_err(err)?;
            write!(out, "{}", crate::metrics::render_table(&result.results)).map_err(err)?;
            for p in written {
                writeln!(out, "wrote {}", p.display()).map_err(err)?;
            }
        }
        Command::Replay { log, episode } => {
            let logs = load_logs(&log).map_err(err)?;
            match episode {
                Some(i) => {
                    let l = logs.get(i).ok_or_else(|| format!("episode {i} not found ({} in file)", logs.len()))?;
                    write!(out, "{}", render_trace(i, l)).map_err(err)?;
                }
                None => {
                    for (i, l) in logs.iter().enumerate() {
                        write!(out, "{}", render_trace(i, l)).map_err(err)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command,
/// writing normal output to `out`. Returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
