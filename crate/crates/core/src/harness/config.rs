//! Experiment configuration, read from TOML.
//!
//! Every table is optional and falls back to its defaults; unknown keys are
//! rejected. Example:
//!
//! ```toml
//! root_seed = 7
//! trials = 30
//! methods = ["pure_idm", "hierarchical"]
//! settings = ["pass_by"]
//! conditions = ["control", "experimental"]
//!
//! [planner.corruption]
//! interaction_noise_sigma = 0.1
//!
//! [executor]
//! tau = 0.5
//! persistence = 3
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PlayConfig;
use crate::executor::{ExecutorConfig, Method};
use crate::idm::TrainConfig;
use crate::lowlevel::LowLevelConfig;
use crate::metrics::MetricsConfig;
use crate::planner::PlannerConfig;
use crate::smoother::SmootherConfig;
use crate::world::{Condition, Setting, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub root_seed: u64,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub settings: Vec<Setting>,
    pub conditions: Vec<Condition>,
    /// Trained model to load. Without one, a model is trained from random
    /// play using `play`, `train` and `train_seed`.
    pub checkpoint: Option<PathBuf>,
    pub train_seed: u64,
    /// Worker threads for episodes; all cores when unset.
    pub threads: Option<usize>,
    /// Also write every episode to `episodes.jsonl`.
    pub write_logs: bool,
    pub world: WorldConfig,
    pub planner: PlannerConfig,
    pub smoother: SmootherConfig,
    pub executor: ExecutorConfig,
    pub lowlevel: LowLevelConfig,
    pub metrics: MetricsConfig,
    pub play: PlayConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            root_seed: 0,
            trials: 30,
            methods: Method::ALL.to_vec(),
            settings: Setting::ALL.to_vec(),
            conditions: Condition::ALL.to_vec(),
            checkpoint: None,
            train_seed: 0,
            threads: None,
            write_logs: true,
            world: WorldConfig::default(),
            planner: PlannerConfig::default(),
            smoother: SmootherConfig::default(),
            executor: ExecutorConfig::default(),
            lowlevel: LowLevelConfig::default(),
            metrics: MetricsConfig::default(),
            play: PlayConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        // Relative checkpoint paths are relative to the config file.
        if let (Some(ck), Some(dir)) = (&cfg.checkpoint, path.parent()) {
            if ck.is_relative() {
                cfg.checkpoint = Some(dir.join(ck));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.trials == 0 {
            return Err("trials must be >= 1".into());
        }
        if self.methods.is_empty() || self.settings.is_empty() || self.conditions.is_empty() {
            return Err("methods, settings and conditions must be non-empty".into());
        }
        if self.threads == Some(0) {
            return Err("threads must be >= 1".into());
        }
        self.world.validate().map_err(|e| e.to_string())?;
        self.planner.corruption.validate().map_err(|e| e.to_string())?;
        self.smoother
            .validate(crate::world::Action::DIM)
            .map_err(|e| e.to_string())?;
        self.executor.validate()?;
        self.lowlevel.validate()?;
        self.metrics.validate()?;
        self.play.validate()?;
        Ok(())
    }

    pub fn needs_model(&self) -> bool {
        self.methods.iter().any(|m| m.needs_model())
    }
}
