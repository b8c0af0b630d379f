//! Turning a parsed fix label into trajectory edits, replaying them in the surrogate
//! and scoring recovery.

use serde::{Deserialize, Serialize};

use crate::label::{FixLabel, LabelResult};
use crate::model::{closing_crossings, FailureType, Outcome, GRIPPER_THRESHOLD};
use crate::world::{simulate, SceneSpec};
use crate::Action;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecoveryError {
    #[error("label reports success; nothing to correct")]
    SuccessLabel,
    #[error("label is missing `{0}`")]
    Missing(&'static str),
    #[error("translation fix of zero bins on both axes")]
    NoOp,
    #[error("no closing keyframe to anchor the translation fix")]
    NoAnchor,
    #[error("primitive anchored at {at} outside horizon {horizon}")]
    OutOfHorizon { at: usize, horizon: usize },
    #[error("invalid trigger policy: {0}")]
    Policy(String),
}

/// When to call the analyzer and which frames it sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerPolicy {
    pub action_budget: usize,
    pub clip_length: usize,
    pub downsample_stride: usize,
}

impl Default for TriggerPolicy {
    fn default() -> Self {
        Self {
            action_budget: 80,
            clip_length: 40,
            downsample_stride: 2,
        }
    }
}

impl TriggerPolicy {
    pub fn validate(&self) -> Result<(), RecoveryError> {
        if self.action_budget == 0 || self.clip_length == 0 || self.downsample_stride == 0 {
            return Err(RecoveryError::Policy("all fields must be positive".into()));
        }
        if self.clip_length > self.action_budget {
            return Err(RecoveryError::Policy(format!(
                "clip length {} exceeds action budget {}",
                self.clip_length, self.action_budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerDecision {
    InvokeAtKeyframe(usize),
    InvokeAtBudget,
    Continue,
}

/// Event rule over the gripper commands issued so far.
pub fn should_invoke(commands: &[f64], policy: &TriggerPolicy) -> TriggerDecision {
    let within = &commands[..commands.len().min(policy.action_budget)];
    if let Some(k) = closing_crossings(within, GRIPPER_THRESHOLD).ok().and_then(|c| c.first().copied()) {
        return TriggerDecision::InvokeAtKeyframe(k);
    }
    if commands.len() >= policy.action_budget {
        TriggerDecision::InvokeAtBudget
    } else {
        TriggerDecision::Continue
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipDescriptor {
    pub start: usize,
    pub end: usize,
    pub stride: usize,
    pub indices: Vec<usize>,
}

/// The final `clip_length` frames, subsampled by the stride.
pub fn extract_clip(frames: usize, policy: &TriggerPolicy) -> ClipDescriptor {
    let stride = policy.downsample_stride.max(1);
    let start = frames.saturating_sub(policy.clip_length);
    ClipDescriptor {
        start,
        end: frames,
        stride,
        indices: (start..frames).step_by(stride).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlPrimitive {
    TranslateDelta { dx: f64, dy: f64, at: usize },
    GripperClose { at: usize, strength: f64 },
    Reclose { at: usize, strength: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub policy: TriggerPolicy,
    pub bin_size: f64,
    /// Ramp length for translation deltas; matches the injector window.
    pub window: usize,
    pub reclose_delay: usize,
    pub reclose_boost: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            policy: TriggerPolicy::default(),
            bin_size: 0.01,
            window: 5,
            reclose_delay: 3,
            reclose_boost: 0.2,
        }
    }
}

/// Deterministic conversion of a FAIL label into primitives. `keyframe` anchors
/// translation fixes and is unused for gripper fixes.
pub fn map_to_primitives(
    label: &FixLabel,
    keyframe: Option<usize>,
    cfg: &RecoveryConfig,
) -> Result<Vec<ControlPrimitive>, RecoveryError> {
    if label.result == LabelResult::Success {
        return Err(RecoveryError::SuccessLabel);
    }
    let ty = label.failure_type.ok_or(RecoveryError::Missing("TYPE"))?;
    if ty == FailureType::Translation {
        let dir_x = label.fix_dir_x.ok_or(RecoveryError::Missing("FIX_DIR_X"))?;
        let n_x = label.fix_n_x.ok_or(RecoveryError::Missing("FIX_N_X"))?;
        let dir_y = label.fix_dir_y.ok_or(RecoveryError::Missing("FIX_DIR_Y"))?;
        let n_y = label.fix_n_y.ok_or(RecoveryError::Missing("FIX_N_Y"))?;
        if n_x == 0 && n_y == 0 {
            return Err(RecoveryError::NoOp);
        }
        let at = keyframe.ok_or(RecoveryError::NoAnchor)?;
        return Ok(vec![ControlPrimitive::TranslateDelta {
            dx: dir_x.sign() * n_x as f64 * cfg.bin_size,
            dy: dir_y.sign() * n_y as f64 * cfg.bin_size,
            at,
        }]);
    }
    let g = label.gripper_fix.ok_or(RecoveryError::Missing("CLOSE_AT"))?;
    let mut out = vec![ControlPrimitive::GripperClose {
        at: g.close_at,
        strength: g.strength,
    }];
    if ty == FailureType::WeakClose {
        out.push(ControlPrimitive::Reclose {
            at: g.close_at + cfg.reclose_delay,
            strength: (g.strength + cfg.reclose_boost).min(1.0),
        });
    }
    Ok(out)
}

/// First index after `at` where the command rises through the threshold.
fn next_rising(actions: &[Action], at: usize) -> usize {
    (at.max(1)..actions.len())
        .find(|&t| actions[t - 1].gripper_cmd < GRIPPER_THRESHOLD && actions[t].gripper_cmd >= GRIPPER_THRESHOLD)
        .filter(|&t| t > at)
        .unwrap_or(actions.len())
}

/// Applies primitives to the failed action sequence.
pub fn apply_primitives(
    failed: &[Action],
    primitives: &[ControlPrimitive],
    window: usize,
) -> Result<Vec<Action>, RecoveryError> {
    let horizon = failed.len();
    let mut out = failed.to_vec();
    for p in primitives {
        match *p {
            ControlPrimitive::TranslateDelta { dx, dy, at } => {
                if at > horizon || window == 0 || window > at {
                    return Err(RecoveryError::OutOfHorizon { at, horizon });
                }
                let w = window as f64;
                for a in &mut out[at - window..at] {
                    a.dx += dx / w;
                    a.dy += dy / w;
                }
            }
            ControlPrimitive::GripperClose { at, strength } | ControlPrimitive::Reclose { at, strength } => {
                if at >= horizon {
                    return Err(RecoveryError::OutOfHorizon { at, horizon });
                }
                // the release edge comes from the failed plan, not from earlier edits
                let until = next_rising(failed, at);
                for a in &mut out[at..until] {
                    a.gripper_cmd = 1.0 - strength;
                }
            }
        }
    }
    Ok(out)
}

/// Edits, replays and reports the surrogate success bit.
pub fn replay_with_recovery(
    scene: &SceneSpec,
    failed: &[Action],
    primitives: &[ControlPrimitive],
    window: usize,
) -> Result<(Vec<Action>, bool), RecoveryError> {
    let edited = apply_primitives(failed, primitives, window)?;
    let ok = simulate(scene, &edited).outcome == Outcome::Success;
    Ok((edited, ok))
}

/// One failure to be corrected. `label` is `None` when the prediction did not parse.
#[derive(Debug, Clone)]
pub struct RecoveryCase {
    pub id: String,
    pub scene: SceneSpec,
    pub failed_actions: Vec<Action>,
    pub label: Option<FixLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub id: String,
    pub primitives: Vec<ControlPrimitive>,
    pub recovered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Maps and replays one case. Unusable labels leave the actions unchanged.
pub fn recover_case(case: &RecoveryCase, cfg: &RecoveryConfig) -> RecoveryResult {
    let keyframe = closing_crossings(
        &case.failed_actions.iter().map(|a| a.gripper_cmd).collect::<Vec<_>>(),
        GRIPPER_THRESHOLD,
    )
    .ok()
    .and_then(|c| c.first().copied());
    let mapped = match &case.label {
        Some(l) => map_to_primitives(l, keyframe, cfg),
        None => Err(RecoveryError::Missing("RESULT")),
    };
    let (primitives, error) = match mapped {
        Ok(p) => (p, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    match replay_with_recovery(&case.scene, &case.failed_actions, &primitives, cfg.window) {
        Ok((_, recovered)) => RecoveryResult {
            id: case.id.clone(),
            primitives,
            recovered,
            error,
        },
        Err(e) => RecoveryResult {
            id: case.id.clone(),
            primitives,
            recovered: simulate(&case.scene, &case.failed_actions).outcome == Outcome::Success,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub cases: usize,
    pub recovered: usize,
    /// `None` for an empty case list.
    pub rate: Option<f64>,
}

pub fn recovery_rate(results: &[RecoveryResult]) -> RecoveryReport {
    let recovered = results.iter().filter(|r| r.recovered).count();
    RecoveryReport {
        cases: results.len(),
        recovered,
        rate: (!results.is_empty()).then(|| recovered as f64 / results.len() as f64),
    }
}

/// Deliberately wrong counterpart of a FAIL label: translation directions are
/// reversed, gripper strengths become `1 - strength`.
pub fn flip_label(label: &FixLabel) -> FixLabel {
    let mut out = label.clone();
    out.fix_dir_x = label.fix_dir_x.map(|d| d.flipped());
    out.fix_dir_y = label.fix_dir_y.map(|d| d.flipped());
    if let Some(g) = &mut out.gripper_fix {
        g.strength = ((1.0 - g.strength) * 100.0).round() / 100.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{parse, AxisDir};

    #[test]
    fn trigger_rules() {
        let p = TriggerPolicy::default();
        let mut cmds = vec![1.0; 30];
        cmds.push(0.0);
        assert_eq!(should_invoke(&cmds, &p), TriggerDecision::InvokeAtKeyframe(30));
        assert_eq!(should_invoke(&[1.0; 80], &p), TriggerDecision::InvokeAtBudget);
        assert_eq!(should_invoke(&[1.0; 40], &p), TriggerDecision::Continue);
    }

    #[test]
    fn clip_indices() {
        let p = TriggerPolicy::default();
        assert_eq!(extract_clip(100, &p).indices, (60..100).step_by(2).collect::<Vec<_>>());
        assert_eq!(extract_clip(20, &p).indices, (0..20).step_by(2).collect::<Vec<_>>());
        let contiguous = TriggerPolicy {
            downsample_stride: 1,
            ..p
        };
        assert_eq!(extract_clip(50, &contiguous).indices, (10..50).collect::<Vec<_>>());
    }

    #[test]
    fn translation_mapping() {
        let l = parse("RESULT=FAIL; TYPE=translation; STAGE=pre_grasp; FIX_DIR_X=-x; FIX_N_X=2; FIX_DIR_Y=+y; FIX_N_Y=0; s").unwrap();
        let p = map_to_primitives(&l, Some(22), &RecoveryConfig::default()).unwrap();
        let ControlPrimitive::TranslateDelta { dx, dy, at } = p[0] else { panic!() };
        assert!((dx + 0.02).abs() < 1e-15 && dy == 0.0 && at == 22);
        let mut zero = l.clone();
        zero.fix_n_x = Some(0);
        assert_eq!(map_to_primitives(&zero, Some(22), &RecoveryConfig::default()), Err(RecoveryError::NoOp));
        assert_eq!(flip_label(&l).fix_dir_x, Some(AxisDir::PlusX));
    }

    #[test]
    fn weak_close_maps_to_a_pair() {
        let l = parse("RESULT=FAIL; TYPE=weak_close; STAGE=grasp; CLOSE_AT=22; STRENGTH=0.90; s").unwrap();
        let p = map_to_primitives(&l, None, &RecoveryConfig::default()).unwrap();
        assert_eq!(p.len(), 2);
        assert!(matches!(p[1], ControlPrimitive::Reclose { at: 25, strength } if strength == 1.0));
    }

    #[test]
    fn empty_edit_is_identity() {
        let scene = SceneSpec::default();
        let demo = crate::world::script_success(&scene, 60).unwrap();
        let (edited, ok) = replay_with_recovery(&scene, &demo.actions, &[], 5).unwrap();
        assert_eq!(edited, demo.actions);
        assert!(ok);
    }
}
