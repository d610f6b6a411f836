//! Instruction-following and overall success, failure attribution, and
//! Suc/All result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::executor::{EpisodeLog, StepRecord};
use crate::planner::PlanMeta;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Gripper-to-target-surface distance that counts as reaching it.
    pub tau_ins: f64,
    /// Target-to-container distance that counts as placed.
    pub tau_task: f64,
    /// Per-step displacement below which the target counts as static.
    pub tau_static: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            tau_ins: 0.05,
            tau_task: 0.06,
            tau_static: 1e-4,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau_ins > 0.0 && self.tau_task > 0.0 && self.tau_static > 0.0) {
            return Err("metric thresholds must be > 0".into());
        }
        Ok(())
    }
}

/// Running evaluation of both success predicates, one step at a time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuccessTracker {
    cfg: MetricsConfig,
    min_distance: f64,
    placed: bool,
}

impl SuccessTracker {
    pub fn new(cfg: MetricsConfig) -> Self {
        Self {
            cfg,
            min_distance: f64::INFINITY,
            placed: false,
        }
    }

    pub fn update(&mut self, rec: &StepRecord) {
        self.min_distance = self.min_distance.min(rec.target_distance);
        let static_now = rec.target_velocity.norm() <= self.cfg.tau_static;
        let near = rec.target_center.distance(rec.container_center) <= self.cfg.tau_task;
        self.placed |= static_now && near;
    }

    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    pub fn instruction(&self) -> bool {
        self.min_distance <= self.cfg.tau_ins
    }

    pub fn overall(&self) -> bool {
        self.placed
    }
}

fn track(log: &EpisodeLog, cfg: &MetricsConfig) -> SuccessTracker {
    let mut t = SuccessTracker::new(*cfg);
    for rec in &log.steps {
        t.update(rec);
    }
    t
}

/// The gripper came within `tau_ins` of the target's surface at some step.
/// An empty log is a failure.
pub fn instruction_follow_success(log: &EpisodeLog, cfg: &MetricsConfig) -> bool {
    track(log, cfg).instruction()
}

/// At some step the target was both static and within `tau_task` of the
/// task container. An empty log is a failure.
pub fn overall_success(log: &EpisodeLog, cfg: &MetricsConfig) -> bool {
    track(log, cfg).overall()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    VideoGeneration,
    Guidance,
    Interaction,
    None,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::VideoGeneration => "video_generation",
            FailureKind::Guidance => "guidance",
            FailureKind::Interaction => "interaction",
            FailureKind::None => "none",
        }
    }
}

/// Earliest broken stage wins: a wrong plan, then failing to reach the
/// target, then failing to manipulate it.
pub fn classify_failure(log: &EpisodeLog, cfg: &MetricsConfig, plan_meta: Option<&PlanMeta>) -> FailureKind {
    let t = track(log, cfg);
    if t.overall() {
        return FailureKind::None;
    }
    if plan_meta.is_some_and(|m| m.semantic_fired || !(m.final_target_to_container <= cfg.tau_task)) {
        return FailureKind::VideoGeneration;
    }
    if !t.instruction() {
        return FailureKind::Guidance;
    }
    FailureKind::Interaction
}

/// Scored episode with its cell labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub method: String,
    pub setting: String,
    pub condition: String,
    pub trial: u64,
    pub instruction: bool,
    pub overall: bool,
    pub failure: FailureKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub method: String,
    pub setting: String,
    pub condition: String,
    pub metric: String,
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
}

impl ResultsRow {
    /// `"20/30  0.67"`.
    pub fn suc_all(&self) -> String {
        format!("{}/{}  {:.2}", self.successes, self.trials, self.rate)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub method: String,
    pub setting: String,
    pub condition: String,
    pub failures: u64,
    pub video_generation: u64,
    pub guidance: u64,
    pub interaction: u64,
}

pub const METRIC_INSTRUCTION: &str = "instruction";
pub const METRIC_OVERALL: &str = "overall";

/// Groups outcomes by (method, setting, condition). Rows come out sorted by
/// those labels, so the result does not depend on input order.
pub fn aggregate(outcomes: &[EpisodeOutcome]) -> (Vec<ResultsRow>, Vec<FailureRow>) {
    let mut cells: BTreeMap<(&str, &str, &str), Vec<&EpisodeOutcome>> = BTreeMap::new();
    for o in outcomes {
        cells.entry((&o.method, &o.setting, &o.condition)).or_default().push(o);
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((method, setting, condition), eps) in cells {
        let n = eps.len() as u64;
        for (metric, f) in [
            (METRIC_INSTRUCTION, (|o: &EpisodeOutcome| o.instruction) as fn(&EpisodeOutcome) -> bool),
            (METRIC_OVERALL, |o: &EpisodeOutcome| o.overall),
        ] {
            let s = eps.iter().filter(|o| f(o)).count() as u64;
            rows.push(ResultsRow {
                method: method.into(),
                setting: setting.into(),
                condition: condition.into(),
                metric: metric.into(),
                successes: s,
                trials: n,
                rate: s as f64 / n as f64,
            });
        }
        let mut fr = FailureRow {
            method: method.into(),
            setting: setting.into(),
            condition: condition.into(),
            ..FailureRow::default()
        };
        for o in eps.iter().filter(|o| !o.overall) {
            fr.failures += 1;
            match o.failure {
                FailureKind::VideoGeneration => fr.video_generation += 1,
                FailureKind::Guidance => fr.guidance += 1,
                FailureKind::Interaction | FailureKind::None => fr.interaction += 1,
            }
        }
        failures.push(fr);
    }
    (rows, failures)
}

pub fn write_results_csv<W: io::Write>(rows: &[ResultsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "setting", "condition", "metric", "suc", "all", "rate"])?;
    for r in rows {
        w.write_record([
            r.method.as_str(),
            &r.setting,
            &r.condition,
            &r.metric,
            &r.successes.to_string(),
            &r.trials.to_string(),
            &format!("{:.2}", r.rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_failures_csv<W: io::Write>(rows: &[FailureRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "setting", "condition", "failures", "video_generation", "guidance", "interaction"])?;
    for r in rows {
        w.write_record([
            r.method.as_str(),
            &r.setting,
            &r.condition,
            &r.failures.to_string(),
            &r.video_generation.to_string(),
            &r.guidance.to_string(),
            &r.interaction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table with one Suc/All column per metric.
pub fn render_table(rows: &[ResultsRow]) -> String {
    let mut cells: BTreeMap<(&str, &str, &str), BTreeMap<&str, String>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((&r.method, &r.setting, &r.condition))
            .or_default()
            .insert(&r.metric, r.suc_all());
    }
    let header = ["method", "setting", "condition", METRIC_INSTRUCTION, METRIC_OVERALL];
    let mut lines: Vec<[String; 5]> = vec![header.map(String::from)];
    for ((m, s, c), metrics) in &cells {
        let get = |k: &str| metrics.get(k).cloned().unwrap_or_else(|| "-".into());
        lines.push([m.to_string(), s.to_string(), c.to_string(), get(METRIC_INSTRUCTION), get(METRIC_OVERALL)]);
    }
    let widths: Vec<usize> = (0..5).map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for l in &lines {
        let cols: Vec<String> = l.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        let _ = writeln!(out, "{}", cols.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{Method, Mode, Termination};
    use crate::world::{Action, Condition, ObjectId, Setting, TaskSpec, Vec3};

    fn rec(ee: Vec3, target: Vec3, vel: Vec3, container: Vec3) -> StepRecord {
        StepRecord {
            step: 0,
            mode: Mode::Plan,
            hand_source: None,
            queue_index: None,
            action: Action::new(ee, 1.0),
            gate: None,
            ee,
            aperture: 1.0,
            held: None,
            target_distance: (ee.distance(target) - 0.025).max(0.0),
            target_center: target,
            target_velocity: vel,
            container_center: container,
            objects: vec![],
        }
    }

    pub(crate) fn log_of(steps: Vec<StepRecord>) -> EpisodeLog {
        EpisodeLog {
            method: Method::PureIdm,
            task: TaskSpec {
                target_id: ObjectId(0),
                container_id: ObjectId(0),
                setting: Setting::PassBy,
                condition: Condition::Control,
            },
            scene_seed: 0,
            target_radius: 0.025,
            chunk: None,
            plan_meta: None,
            switches: vec![],
            returns: vec![],
            termination: Termination::PlanExhausted,
            error: None,
            steps,
        }
    }

    #[test]
    fn empty_log_fails_both() {
        let log = log_of(vec![]);
        let cfg = MetricsConfig::default();
        assert!(!instruction_follow_success(&log, &cfg));
        assert!(!overall_success(&log, &cfg));
    }

    #[test]
    fn touching_target_follows_instruction() {
        let t = Vec3::new(0.5, 0.5, 0.125);
        let c = Vec3::new(0.2, 0.2, 0.125);
        let log = log_of(vec![rec(Vec3::new(0.3, 0.3, 0.2), t, Vec3::ZERO, c), rec(t, t, Vec3::ZERO, c)]);
        assert!(instruction_follow_success(&log, &MetricsConfig::default()));
        assert!(!overall_success(&log, &MetricsConfig::default()));
    }

    #[test]
    fn placed_and_still_is_overall_success() {
        let c = Vec3::new(0.2, 0.2, 0.125);
        let log = log_of(vec![rec(c, c, Vec3::ZERO, c)]);
        assert!(overall_success(&log, &MetricsConfig::default()));
        assert_eq!(classify_failure(&log, &MetricsConfig::default(), None), FailureKind::None);
    }

    #[test]
    fn moving_through_container_is_not_placement() {
        let c = Vec3::new(0.2, 0.2, 0.125);
        let v = Vec3::new(0.02, 0.0, 0.0);
        let steps = (0..5)
            .map(|i| {
                let p = c + Vec3::new(0.02 * (i as f64 - 2.0), 0.0, 0.0);
                rec(p, p, v, c)
            })
            .chain([rec(c + Vec3::new(0.3, 0.0, 0.0), c + Vec3::new(0.3, 0.0, 0.0), Vec3::ZERO, c)])
            .collect();
        assert!(!overall_success(&log_of(steps), &MetricsConfig::default()));
    }

    #[test]
    fn failure_precedence() {
        let cfg = MetricsConfig::default();
        let t = Vec3::new(0.5, 0.5, 0.125);
        let c = Vec3::new(0.2, 0.2, 0.125);
        let reached = log_of(vec![rec(t, t, Vec3::ZERO, c)]);
        let missed = log_of(vec![rec(c, t, Vec3::ZERO, c)]);
        let good = PlanMeta {
            planned_target: ObjectId(0),
            semantic_fired: false,
            truncated_at: None,
            oracle_frames: 10,
            final_target_to_container: 0.0,
        };
        let wrong = PlanMeta {
            semantic_fired: true,
            ..good.clone()
        };
        assert_eq!(classify_failure(&reached, &cfg, Some(&good)), FailureKind::Interaction);
        assert_eq!(classify_failure(&missed, &cfg, Some(&good)), FailureKind::Guidance);
        assert_eq!(classify_failure(&reached, &cfg, Some(&wrong)), FailureKind::VideoGeneration);
        let short = PlanMeta {
            final_target_to_container: 0.4,
            ..good
        };
        assert_eq!(classify_failure(&reached, &cfg, Some(&short)), FailureKind::VideoGeneration);
    }

    fn outcome(cell: &str, trial: u64, overall: bool, failure: FailureKind) -> EpisodeOutcome {
        EpisodeOutcome {
            method: cell.into(),
            setting: "pass_by".into(),
            condition: "control".into(),
            trial,
            instruction: true,
            overall,
            failure,
        }
    }

    #[test]
    fn aggregate_counts_and_renders() {
        let mut eps: Vec<_> = (0..30)
            .map(|i| {
                if i < 20 {
                    outcome("m", i, true, FailureKind::None)
                } else if i < 27 {
                    outcome("m", i, false, FailureKind::Interaction)
                } else {
                    outcome("m", i, false, FailureKind::Guidance)
                }
            })
            .collect();
        let (rows, fails) = aggregate(&eps);
        let overall = rows.iter().find(|r| r.metric == METRIC_OVERALL).unwrap();
        assert_eq!(overall.suc_all(), "20/30  0.67");
        assert_eq!(fails[0].failures, 10);
        assert_eq!(fails[0].video_generation + fails[0].guidance + fails[0].interaction, 10);
        eps.reverse();
        assert_eq!(aggregate(&eps), (rows.clone(), fails));
        assert!(aggregate(&[]).0.is_empty());

        let mut csv = Vec::new();
        write_results_csv(&rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("method,setting,condition,metric,suc,all,rate\n"));
        assert!(text.contains("m,pass_by,control,overall,20,30,0.67"));
        assert!(render_table(&rows).contains("20/30  0.67"));
    }
}
