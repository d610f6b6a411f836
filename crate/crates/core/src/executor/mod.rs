//! Execution variants: pure IDM, gated hierarchical switching and
//! simultaneous factorized control, plus the low-level policy alone.

mod run;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::idm::PlannedChunk;
use crate::planner::PlanMeta;
use crate::world::{Action, ObjectId, TaskSpec, Vec3};

pub use run::{
    compose, episode_seeds, run_episode, run_hierarchical, run_lowlevel_only, run_pure_idm, run_simultaneous, Components,
    EpisodeSpec, ExecError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LowlevelOnly,
    PureIdm,
    Hierarchical,
    Simultaneous,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LowlevelOnly, Method::PureIdm, Method::Hierarchical, Method::Simultaneous];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LowlevelOnly => "lowlevel_only",
            Method::PureIdm => "pure_idm",
            Method::Hierarchical => "hierarchical",
            Method::Simultaneous => "simultaneous",
        }
    }

    pub fn needs_model(self) -> bool {
        self != Method::LowlevelOnly
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected one of lowlevel_only, pure_idm, hierarchical, simultaneous)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plan,
    Lowlevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    PlanExhausted,
    PolicyDone,
    StepBudget,
    PlanInfeasible,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Success => "success",
            Termination::PlanExhausted => "plan_exhausted",
            Termination::PolicyDone => "policy_done",
            Termination::StepBudget => "step_budget",
            Termination::PlanInfeasible => "plan_infeasible",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub id: ObjectId,
    pub center: Vec3,
    pub velocity: Vec3,
}

/// State after one executed step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub mode: Mode,
    /// Source of the aperture command when it differs from `mode`.
    pub hand_source: Option<Mode>,
    /// Chunk index of the executed action in plan mode.
    pub queue_index: Option<usize>,
    pub action: Action,
    /// Realtime gate computed before the action was chosen.
    pub gate: Option<f64>,
    pub ee: Vec3,
    pub aperture: f64,
    pub held: Option<ObjectId>,
    pub target_distance: f64,
    pub target_center: Vec3,
    pub target_velocity: Vec3,
    pub container_center: Vec3,
    pub objects: Vec<ObjectTrack>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub method: Method,
    pub task: TaskSpec,
    pub scene_seed: u64,
    pub target_radius: f64,
    /// Smoothed chunk with predicted gates, in queue order.
    pub chunk: Option<PlannedChunk>,
    pub plan_meta: Option<PlanMeta>,
    /// Steps at which control passed to the low-level policy.
    pub switches: Vec<u64>,
    /// Steps at which control returned to the plan.
    pub returns: Vec<u64>,
    pub termination: Termination,
    pub error: Option<String>,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorConfig {
    pub tau: f64,
    /// Consecutive readings required to switch.
    pub persistence: usize,
    /// Override of `persistence` for switching back.
    pub persistence_low: Option<usize>,
    pub max_switches: Option<u32>,
    pub step_budget: usize,
    /// Hand control to the policy once if the plan runs out.
    pub final_fallback: bool,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            persistence: 3,
            persistence_low: None,
            max_switches: Some(1),
            step_budget: 400,
            final_fallback: false,
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.persistence == 0 || self.persistence_low == Some(0) {
            return Err("persistence must be >= 1".into());
        }
        if self.step_budget == 0 {
            return Err("step_budget must be >= 1".into());
        }
        Ok(())
    }

    pub fn low_persistence(&self) -> usize {
        self.persistence_low.unwrap_or(self.persistence)
    }
}

/// The last `k` gate readings all exceed `tau`.
pub fn stable_high(history: &[f64], tau: f64, k: usize) -> bool {
    history.len() >= k && history[history.len() - k..].iter().all(|&g| g > tau)
}

/// The last `k` gate readings are all at or below `tau`.
pub fn stable_low(history: &[f64], tau: f64, k: usize) -> bool {
    history.len() >= k && history[history.len() - k..].iter().all(|&g| g <= tau)
}

/// First index `j >= k` whose predicted gate is at or below `tau`, or the
/// chunk length when the rest of the chunk is all interaction.
pub fn truncate_to_next_low(k: usize, predicted_gates: &[f64], tau: f64) -> usize {
    (k..predicted_gates.len())
        .find(|&j| predicted_gates[j] <= tau)
        .unwrap_or(predicted_gates.len())
}

/// Switching logic of the hierarchical executor, separated from the world
/// so it can be driven by arbitrary gate streams.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMonitor {
    pub tau: f64,
    pub k_high: usize,
    pub k_low: usize,
    pub max_switches: Option<u32>,
    pub history: Vec<f64>,
    pub enabled: bool,
    pub switches: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateEvent {
    None,
    Engage,
    Release,
}

impl GateMonitor {
    pub fn new(cfg: &ExecutorConfig) -> Self {
        Self {
            tau: cfg.tau,
            k_high: cfg.persistence,
            k_low: cfg.low_persistence(),
            max_switches: cfg.max_switches,
            history: Vec::new(),
            enabled: false,
            switches: 0,
        }
    }

    pub fn can_engage(&self) -> bool {
        self.max_switches.is_none_or(|m| self.switches < m)
    }

    /// Records one reading and reports whether control changes hands.
    pub fn observe(&mut self, gate: f64) -> GateEvent {
        self.history.push(gate);
        if !self.enabled {
            if self.can_engage() && stable_high(&self.history, self.tau, self.k_high) {
                self.enabled = true;
                self.switches += 1;
                return GateEvent::Engage;
            }
        } else if stable_low(&self.history, self.tau, self.k_low) {
            self.enabled = false;
            return GateEvent::Release;
        }
        GateEvent::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_predicates() {
        assert!(stable_high(&[0.6], 0.5, 1));
        assert!(!stable_high(&[0.9, 0.9], 0.5, 3));
        assert!(!stable_high(&[0.6, 0.4, 0.7], 0.5, 3));
        assert!(stable_high(&[0.1, 0.6, 0.8, 0.7], 0.5, 3));
        assert!(stable_low(&[0.4], 0.5, 1));
        assert!(stable_low(&[0.5], 0.5, 1));
        assert!(!stable_low(&[0.1], 0.5, 2));
        assert!(!stable_low(&[0.4, 0.6, 0.3], 0.5, 3));
    }

    #[test]
    fn truncation_examples() {
        let g = [0.1, 0.9, 0.8, 0.2, 0.7];
        assert_eq!(truncate_to_next_low(0, &g, 0.5), 0);
        assert_eq!(truncate_to_next_low(1, &g, 0.5), 3);
        assert_eq!(truncate_to_next_low(4, &g, 0.5), 5);
        assert_eq!(truncate_to_next_low(5, &g, 0.5), 5);
    }

    #[test]
    fn single_switch_budget() {
        let cfg = ExecutorConfig {
            persistence: 2,
            max_switches: Some(1),
            ..ExecutorConfig::default()
        };
        let mut m = GateMonitor::new(&cfg);
        let seq = [0.9, 0.9, 0.9, 0.1, 0.1, 0.9, 0.9, 0.9];
        let events: Vec<_> = seq.iter().map(|&g| m.observe(g)).collect();
        assert_eq!(events.iter().filter(|&&e| e == GateEvent::Engage).count(), 1);
        assert_eq!(events[1], GateEvent::Engage);
        assert_eq!(events[4], GateEvent::Release);
        assert!(!m.enabled);
    }

    #[test]
    fn method_labels_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("teleport".parse::<Method>().is_err());
    }
}
