//! Multi-head inverse dynamics model: a shared encoder over
//! `(previous frame, frame, robot state)` feeding an action head and an
//! interaction-gate head.

mod check;
mod loss;
mod train;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnet::{Mlp, MlpGrads, NnetError, Parameterized, Tape};
use crate::planner::FrameTrajectory;
use crate::world::{Action, Bounds, Observation, ObservationLayout, RobotState};

pub use check::{gradient_check, GradCheckReport, GRADCHECK_STEP};
pub use loss::{bce, bce_logit_grad, sigmoid, weighted_smooth_l1, weighted_smooth_l1_grad, LossConfig, BCE_EPS};
pub use train::{train, CurvePoint, TrainConfig, TrainLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdmError {
    #[error("observation width {got} does not match model layout width {expected}")]
    Width { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("trajectory needs at least 2 frames, got {0}")]
    ShortTrajectory(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nnet(#[from] NnetError),
}

/// One supervised transition: `prev_obs -> obs` under `action`, with `state`
/// the proprioception at `prev_obs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePairSample {
    pub prev_obs: Observation,
    pub obs: Observation,
    pub state: RobotState,
    pub action: Action,
    pub gate_label: bool,
}

/// Action chunk decoded from a frame trajectory, with per-step gates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedChunk {
    pub actions: Vec<Action>,
    pub predicted_gates: Vec<f64>,
}

impl PlannedChunk {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmArch {
    pub encoder_hidden: Vec<usize>,
    pub head_hidden: usize,
}

impl Default for IdmArch {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![256, 256],
            head_hidden: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdmModel {
    pub layout: ObservationLayout,
    pub workspace: Bounds,
    pub encoder: Mlp,
    pub action_head: Mlp,
    pub gate_head: Mlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdmGrads {
    pub encoder: MlpGrads,
    pub action_head: MlpGrads,
    pub gate_head: MlpGrads,
}

/// Cached activations of a batched forward pass.
pub struct IdmTape {
    encoder: Tape,
    encoded: Array2<f64>,
    action: Tape,
    gate: Tape,
}

/// Batched model outputs: raw (unclipped) actions and gate logits.
pub struct IdmOutput {
    pub actions: Array2<f64>,
    pub logits: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub action: f64,
    pub gate: f64,
}

impl IdmModel {
    pub fn new<R: Rng + ?Sized>(
        layout: ObservationLayout,
        workspace: Bounds,
        arch: &IdmArch,
        rng: &mut R,
    ) -> Result<Self, IdmError> {
        if arch.encoder_hidden.is_empty() || arch.head_hidden == 0 {
            return Err(IdmError::Config("encoder and heads need hidden layers".into()));
        }
        let mut enc = vec![Self::input_dim_for(&layout)];
        enc.extend(&arch.encoder_hidden);
        let feat = *enc.last().unwrap();
        Ok(Self {
            layout,
            workspace,
            encoder: Mlp::new(&enc, rng)?,
            action_head: Mlp::new(&[feat, arch.head_hidden, Action::DIM], rng)?,
            gate_head: Mlp::new(&[feat, arch.head_hidden, 1], rng)?,
        })
    }

    pub fn from_parts(
        layout: ObservationLayout,
        workspace: Bounds,
        encoder: Mlp,
        action_head: Mlp,
        gate_head: Mlp,
    ) -> Result<Self, IdmError> {
        if encoder.input_dim() != Self::input_dim_for(&layout) {
            return Err(IdmError::Config(format!(
                "encoder expects {} inputs, layout gives {}",
                encoder.input_dim(),
                Self::input_dim_for(&layout)
            )));
        }
        if action_head.input_dim() != encoder.output_dim() || gate_head.input_dim() != encoder.output_dim() {
            return Err(IdmError::Config("head input dims must equal encoder output dim".into()));
        }
        if action_head.output_dim() != Action::DIM || gate_head.output_dim() != 1 {
            return Err(IdmError::Config("head output dims must be act_dim and 1".into()));
        }
        Ok(Self {
            layout,
            workspace,
            encoder,
            action_head,
            gate_head,
        })
    }

    pub fn input_dim_for(layout: &ObservationLayout) -> usize {
        2 * layout.width() + RobotState::DIM
    }

    pub fn input_dim(&self) -> usize {
        Self::input_dim_for(&self.layout)
    }

    pub fn act_dim(&self) -> usize {
        self.action_head.output_dim()
    }

    pub fn arch(&self) -> IdmArch {
        let sizes = self.encoder.sizes();
        IdmArch {
            encoder_hidden: sizes[1..].to_vec(),
            head_hidden: self.action_head.sizes()[1],
        }
    }

    /// Writes one input row: `prev ++ obs ++ state`.
    fn fill_row(&self, row: &mut [f64], prev: &[f64], obs: &[f64], state: &RobotState) -> Result<(), IdmError> {
        let w = self.layout.width();
        for v in [prev, obs] {
            if v.len() != w {
                return Err(IdmError::Width {
                    expected: w,
                    got: v.len(),
                });
            }
        }
        row[..w].copy_from_slice(prev);
        row[w..2 * w].copy_from_slice(obs);
        row[2 * w..].copy_from_slice(&state.to_array());
        Ok(())
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(IdmOutput, IdmTape), IdmError> {
        let (pre, encoder) = self.encoder.forward(x)?;
        let encoded = pre.mapv(|z| z.max(0.0));
        let (actions, action) = self.action_head.forward(encoded.view())?;
        let (logits, gate) = self.gate_head.forward(encoded.view())?;
        Ok((
            IdmOutput {
                actions,
                logits: logits.column(0).to_vec(),
            },
            IdmTape {
                encoder,
                encoded: pre,
                action,
                gate,
            },
        ))
    }

    pub fn backward_batch(
        &self,
        tape: &IdmTape,
        d_actions: ArrayView2<f64>,
        d_logits: &[f64],
    ) -> Result<IdmGrads, IdmError> {
        let (action_head, d_feat_a) = self.action_head.backward(&tape.action, d_actions)?;
        let dl = Array2::from_shape_vec((d_logits.len(), 1), d_logits.to_vec())
            .map_err(|e| IdmError::Nnet(NnetError::Shape(e.to_string())))?;
        let (gate_head, d_feat_g) = self.gate_head.backward(&tape.gate, dl.view())?;
        let mut d_feat = d_feat_a + d_feat_g;
        ndarray::Zip::from(&mut d_feat).and(&tape.encoded).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        let (encoder, _) = self.encoder.backward(&tape.encoder, d_feat.view())?;
        Ok(IdmGrads {
            encoder,
            action_head,
            gate_head,
        })
    }

    fn finish_action(&self, raw: &[f64]) -> Action {
        let a = Action::from_slice(raw);
        Action {
            pose: self.workspace.clamp(a.pose),
            aperture: a.aperture.clamp(0.0, 1.0),
        }
    }

    /// Action and gate for one transition. The pose is clipped to the
    /// workspace and the aperture to `[0, 1]`.
    pub fn predict(&self, prev_obs: &[f64], obs: &[f64], state: &RobotState) -> Result<(Action, f64), IdmError> {
        let mut x = Array2::zeros((1, self.input_dim()));
        self.fill_row(x.row_mut(0).as_slice_mut().unwrap(), prev_obs, obs, state)?;
        let (out, _) = self.forward_batch(x.view())?;
        Ok((
            self.finish_action(out.actions.row(0).as_slice().unwrap()),
            sigmoid(out.logits[0]),
        ))
    }

    /// Decodes every consecutive frame pair of `traj`. The state for pair
    /// `k > 0` is read from frame `k`; pair 0 uses `state0`.
    pub fn predict_chunk(&self, traj: &FrameTrajectory, state0: &RobotState) -> Result<PlannedChunk, IdmError> {
        let frames = &traj.frames;
        if frames.len() < 2 {
            return Err(IdmError::ShortTrajectory(frames.len()));
        }
        let n = frames.len() - 1;
        let mut x = Array2::zeros((n, self.input_dim()));
        for k in 0..n {
            let state = if k == 0 {
                *state0
            } else {
                self.layout.robot_state(frames[k].as_slice())
            };
            self.fill_row(
                x.row_mut(k).as_slice_mut().unwrap(),
                frames[k].as_slice(),
                frames[k + 1].as_slice(),
                &state,
            )?;
        }
        let (out, _) = self.forward_batch(x.view())?;
        Ok(PlannedChunk {
            actions: out
                .actions
                .axis_iter(Axis(0))
                .map(|r| self.finish_action(r.as_slice().unwrap()))
                .collect(),
            predicted_gates: out.logits.iter().map(|&z| sigmoid(z)).collect(),
        })
    }

    /// Stacks samples into an input matrix.
    pub fn batch_inputs(&self, batch: &[&FramePairSample]) -> Result<Array2<f64>, IdmError> {
        let mut x = Array2::zeros((batch.len(), self.input_dim()));
        for (i, s) in batch.iter().enumerate() {
            self.fill_row(
                x.row_mut(i).as_slice_mut().unwrap(),
                s.prev_obs.as_slice(),
                s.obs.as_slice(),
                &s.state,
            )?;
        }
        Ok(x)
    }

    /// Mean over the batch of `lambda_act * L_act + lambda_gate * L_gate`,
    /// with gradients through both heads and the shared encoder.
    pub fn total_loss(&self, batch: &[&FramePairSample], cfg: &LossConfig) -> Result<(LossBreakdown, IdmGrads), IdmError> {
        if batch.is_empty() {
            return Err(IdmError::EmptyBatch);
        }
        if cfg.action_weights.len() != self.act_dim() {
            return Err(IdmError::Config(format!(
                "{} action weights for act_dim {}",
                cfg.action_weights.len(),
                self.act_dim()
            )));
        }
        let x = self.batch_inputs(batch)?;
        let (out, tape) = self.forward_batch(x.view())?;
        let n = batch.len() as f64;
        let mut d_actions = Array2::zeros(out.actions.dim());
        let mut d_logits = vec![0.0; batch.len()];
        let (mut act, mut gate) = (0.0, 0.0);
        for (i, s) in batch.iter().enumerate() {
            let target = s.action.to_array();
            let pred = out.actions.row(i);
            let pred = pred.as_slice().unwrap();
            act += weighted_smooth_l1(&target, pred, cfg.huber_beta, &cfg.action_weights);
            let mut g = vec![0.0; target.len()];
            weighted_smooth_l1_grad(&target, pred, cfg.huber_beta, &cfg.action_weights, &mut g);
            for (j, gj) in g.into_iter().enumerate() {
                d_actions[[i, j]] = cfg.lambda_act * gj / n;
            }
            let z = out.logits[i];
            gate += bce(sigmoid(z), s.gate_label);
            d_logits[i] = cfg.lambda_gate * bce_logit_grad(z, s.gate_label) / n;
        }
        act /= n;
        gate /= n;
        let grads = self.backward_batch(&tape, d_actions.view(), &d_logits)?;
        Ok((
            LossBreakdown {
                total: cfg.lambda_act * act + cfg.lambda_gate * gate,
                action: act,
                gate,
            },
            grads,
        ))
    }

    /// Raw outputs for a batch, without a tape; used for evaluation.
    pub fn evaluate(&self, batch: &[&FramePairSample]) -> Result<IdmOutput, IdmError> {
        let x = self.batch_inputs(batch)?;
        Ok(self.forward_batch(x.view())?.0)
    }

    /// Zeroes the last layer of both heads, so every gate is exactly 0.5.
    pub fn zero_head_outputs(&mut self) {
        for head in [&mut self.action_head, &mut self.gate_head] {
            let last = head.param_slices_mut().len();
            for (i, s) in head.param_slices_mut().into_iter().enumerate() {
                if i + 2 >= last {
                    s.fill(0.0);
                }
            }
        }
    }
}

fn concat<'a>(parts: [&'a MlpGrads; 3]) -> Vec<&'a [f64]> {
    parts.into_iter().flat_map(|p| p.param_slices()).collect()
}

impl Parameterized for IdmModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.param_slices();
        v.extend(self.action_head.param_slices());
        v.extend(self.gate_head.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.param_slices_mut();
        v.extend(self.action_head.param_slices_mut());
        v.extend(self.gate_head.param_slices_mut());
        v
    }
}

impl Parameterized for IdmGrads {
    fn param_slices(&self) -> Vec<&[f64]> {
        concat([&self.encoder, &self.action_head, &self.gate_head])
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.param_slices_mut();
        v.extend(self.action_head.param_slices_mut());
        v.extend(self.gate_head.param_slices_mut());
        v
    }
}

/// Gaussian noise of scale `sigma` on the continuous entries (positions and
/// aperture) of present slots. Flags and kind codes are left untouched.
pub fn augment_observation<R: Rng + ?Sized>(
    obs: &Observation,
    sigma: f64,
    layout: &ObservationLayout,
    rng: &mut R,
) -> Observation {
    if sigma <= 0.0 {
        return obs.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let mut mask = layout.present_pose_mask(obs.as_slice());
    mask[3] = true;
    let mut v = obs.0.clone();
    for (x, m) in v.iter_mut().zip(mask) {
        if m {
            *x += normal.sample(rng);
        }
    }
    Observation(v)
}

/// Fraction of rows where the thresholded gate agrees with the label.
pub fn gate_accuracy(model: &IdmModel, samples: &[FramePairSample], tau: f64) -> Result<f64, IdmError> {
    if samples.is_empty() {
        return Err(IdmError::EmptyDataset);
    }
    let mut hits = 0usize;
    for chunk in samples.chunks(1024) {
        let refs: Vec<_> = chunk.iter().collect();
        let out = model.evaluate(&refs)?;
        hits += chunk
            .iter()
            .zip(&out.logits)
            .filter(|(s, &z)| (sigmoid(z) > tau) == s.gate_label)
            .count();
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Mean action loss over `samples`, evaluated without gradients.
pub fn mean_action_loss(model: &IdmModel, samples: &[FramePairSample], cfg: &LossConfig) -> Result<f64, IdmError> {
    if samples.is_empty() {
        return Err(IdmError::EmptyDataset);
    }
    let mut total = 0.0;
    for chunk in samples.chunks(1024) {
        let refs: Vec<_> = chunk.iter().collect();
        let out = model.evaluate(&refs)?;
        for (i, s) in chunk.iter().enumerate() {
            let row = out.actions.slice(s![i, ..]);
            total += weighted_smooth_l1(&s.action.to_array(), row.as_slice().unwrap(), cfg.huber_beta, &cfg.action_weights);
        }
    }
    Ok(total / samples.len() as f64)
}
