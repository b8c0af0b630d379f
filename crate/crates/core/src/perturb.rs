//! Keyframe-local action perturbations for the four failure types.
//!
//! Injectors edit only the action sequence. The returned [`PerturbationSpec`]
//! records every realized parameter, so [`PerturbationSpec::apply`] reproduces the
//! edited actions without touching the random source again.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{closing_crossings, Action, FailureType, ModelError, GRIPPER_THRESHOLD};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerturbError {
    #[error("keyframe {0} is not a closing transition of the gripper command")]
    NotClosing(usize),
    #[error("no closing keyframe in the action sequence")]
    NoKeyframe,
    #[error("delay of {delay} steps from keyframe {keyframe} passes the horizon {horizon}")]
    PastHorizon {
        keyframe: usize,
        delay: usize,
        horizon: usize,
    },
    #[error("strength scale {0} outside (0, 1]")]
    Strength(f64),
    #[error("window must be at least 1 step and fit before keyframe {keyframe}, got {window}")]
    Window { keyframe: usize, window: usize },
    #[error("sigma must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("no draw reached the failure floor {floor} after {tries} tries")]
    Floor { floor: f64, tries: usize },
    #[error("spec for {0} is missing field {1}")]
    Incomplete(FailureType, &'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Realized perturbation parameters. Only the fields relevant to `failure_type` are set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub failure_type: FailureType,
    pub keyframe: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invert: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub seed: u64,
}

impl PerturbationSpec {
    fn bare(failure_type: FailureType, keyframe: usize, seed: u64) -> Self {
        Self {
            failure_type,
            keyframe,
            window: None,
            delay_steps: None,
            strength_scale: None,
            invert: None,
            offset_x: None,
            offset_y: None,
            sigma: None,
            seed,
        }
    }

    /// Re-applies the recorded parameters to the original actions.
    pub fn apply<T: Scalar>(&self, actions: &[Action<T>]) -> Result<Vec<Action<T>>, PerturbError> {
        let ty = self.failure_type;
        let need = |v: Option<usize>, name| v.ok_or(PerturbError::Incomplete(ty, name));
        match ty {
            FailureType::DelayClose => {
                delay_close_edit(actions, self.keyframe, need(self.delay_steps, "delay_steps")?)
            }
            FailureType::WeakClose => weak_close_edit(
                actions,
                self.keyframe,
                self.strength_scale
                    .ok_or(PerturbError::Incomplete(ty, "strength_scale"))?,
            ),
            FailureType::ForceOpen => force_open_edit(actions, self.keyframe, need(self.window, "window")?),
            FailureType::Translation => translation_edit(
                actions,
                self.keyframe,
                need(self.window, "window")?,
                self.offset_x.ok_or(PerturbError::Incomplete(ty, "offset_x"))?,
                self.offset_y.ok_or(PerturbError::Incomplete(ty, "offset_y"))?,
            ),
        }
    }
}

/// Sampling ranges for candidate generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    pub window: usize,
    pub sigma: f64,
    /// Inclusive range of delay steps.
    pub delay_steps: [usize; 2],
    pub strength_scale: [f64; 2],
    pub max_resamples: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            window: 5,
            sigma: 0.02,
            delay_steps: [4, 10],
            strength_scale: [0.3, 0.6],
            max_resamples: 1000,
        }
    }
}

fn gripper_cmds<T: Scalar>(actions: &[Action<T>]) -> Vec<T> {
    actions.iter().map(|a| a.gripper_cmd).collect()
}

/// First closing transition on the command channel.
pub fn closing_keyframe<T: Scalar>(actions: &[Action<T>]) -> Result<usize, PerturbError> {
    closing_crossings(&gripper_cmds(actions), GRIPPER_THRESHOLD)?
        .first()
        .copied()
        .ok_or(PerturbError::NoKeyframe)
}

fn check_closing<T: Scalar>(actions: &[Action<T>], keyframe: usize) -> Result<(), PerturbError> {
    let closing = closing_crossings(&gripper_cmds(actions), GRIPPER_THRESHOLD)?;
    if closing.contains(&keyframe) {
        Ok(())
    } else {
        Err(PerturbError::NotClosing(keyframe))
    }
}

fn delay_close_edit<T: Scalar>(
    actions: &[Action<T>],
    keyframe: usize,
    delay: usize,
) -> Result<Vec<Action<T>>, PerturbError> {
    check_closing(actions, keyframe)?;
    let horizon = actions.len();
    if keyframe + delay >= horizon {
        return Err(PerturbError::PastHorizon {
            keyframe,
            delay,
            horizon,
        });
    }
    let held = actions[keyframe - 1].gripper_cmd;
    let mut out = actions.to_vec();
    for t in keyframe..horizon {
        out[t].gripper_cmd = if t < keyframe + delay {
            held
        } else {
            actions[t - delay].gripper_cmd
        };
    }
    Ok(out)
}

fn weak_close_edit<T: Scalar>(
    actions: &[Action<T>],
    keyframe: usize,
    scale: f64,
) -> Result<Vec<Action<T>>, PerturbError> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(PerturbError::Strength(scale));
    }
    check_closing(actions, keyframe)?;
    let s = T::lit(scale);
    let mut out = actions.to_vec();
    for a in &mut out[keyframe..] {
        a.gripper_cmd = T::one() - s * (T::one() - a.gripper_cmd);
    }
    Ok(out)
}

fn force_open_edit<T: Scalar>(
    actions: &[Action<T>],
    keyframe: usize,
    window: usize,
) -> Result<Vec<Action<T>>, PerturbError> {
    if window == 0 {
        return Err(PerturbError::Window { keyframe, window });
    }
    check_closing(actions, keyframe)?;
    let thr = T::lit(GRIPPER_THRESHOLD);
    let lo = keyframe.saturating_sub(window);
    let hi = keyframe + window;
    let mut out = actions.to_vec();
    for (t, a) in out.iter_mut().enumerate().skip(lo) {
        let cmd = a.gripper_cmd;
        if cmd < thr {
            // inside the window the closing command is inverted; later closings are
            // clamped fully open
            a.gripper_cmd = if t <= hi { T::one() - cmd } else { T::one() };
        }
    }
    Ok(out)
}

fn translation_edit<T: Scalar>(
    actions: &[Action<T>],
    keyframe: usize,
    window: usize,
    offset_x: f64,
    offset_y: f64,
) -> Result<Vec<Action<T>>, PerturbError> {
    if window == 0 || window > keyframe || keyframe > actions.len() {
        return Err(PerturbError::Window { keyframe, window });
    }
    let n = T::from_usize_lossy(window);
    let (sx, sy) = (T::lit(offset_x) / n, T::lit(offset_y) / n);
    let mut out = actions.to_vec();
    for a in &mut out[keyframe - window..keyframe] {
        a.dx = a.dx + sx;
        a.dy = a.dy + sy;
    }
    Ok(out)
}

/// Holds the gripper at its pre-close value for `delay_steps` and shifts the rest
/// of the command sequence later.
pub fn inject_delay_close<T: Scalar>(
    actions: &[Action<T>],
    keyframe: usize,
    delay_steps: usize,
    seed: u64,
) -> Result<(Vec<Action<T>>, PerturbationSpec), PerturbError> {
    let out = delay_close_edit(actions, keyframe, delay_steps)?;
    let mut spec = PerturbationSpec::bare(FailureType::DelayClose, keyframe, seed);
    spec.delay_steps = Some(delay_steps);
    Ok((out, spec))
}

/// Scales the closing depth from the keyframe on: `cmd' = 1 - s (1 - cmd)`.
pub fn inject_weak_close<T: Scalar>(
    actions: &[Action<T>],
    keyframe: usize,
    strength_scale: f64,
    seed: u64,
) -> Result<(Vec<Action<T>>, PerturbationSpec), PerturbError> {
    let out = weak_close_edit(actions, keyframe, strength_scale)?;
    let mut spec = PerturbationSpec::bare(FailureType::WeakClose, keyframe, seed);
    spec.strength_scale = Some(strength_scale);
    Ok((out, spec))
}

/// Inverts the closing commands around the keyframe and keeps the gripper open afterwards.
pub fn inject_force_open<T: Scalar>(
    actions: &[Action<T>],
    keyframe: usize,
    window: usize,
    seed: u64,
) -> Result<(Vec<Action<T>>, PerturbationSpec), PerturbError> {
    let out = force_open_edit(actions, keyframe, window)?;
    let mut spec = PerturbationSpec::bare(FailureType::ForceOpen, keyframe, seed);
    spec.window = Some(window);
    spec.invert = Some(true);
    Ok((out, spec))
}

/// Realized translation draw plus the number of draws below the floor that were discarded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetDraw {
    pub offset_x: f64,
    pub offset_y: f64,
    pub rejected: usize,
}

/// Draws `(ox, oy) ~ N(0, sigma^2)` until `max(|ox|, |oy|) >= floor`.
pub fn draw_offset(sigma: f64, floor: f64, seed: u64, max_tries: usize) -> Result<OffsetDraw, PerturbError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(PerturbError::Sigma(sigma));
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| PerturbError::Sigma(sigma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for rejected in 0..max_tries {
        let ox = normal.sample(&mut rng);
        let oy = normal.sample(&mut rng);
        if ox.abs().max(oy.abs()) >= floor {
            return Ok(OffsetDraw {
                offset_x: ox,
                offset_y: oy,
                rejected,
            });
        }
    }
    Err(PerturbError::Floor {
        floor,
        tries: max_tries,
    })
}

/// Adds one per-rollout planar offset, ramped in over `[keyframe - window, keyframe)`
/// and held afterwards.
pub fn inject_translation<T: Scalar>(
    actions: &[Action<T>],
    keyframe: usize,
    window: usize,
    sigma: f64,
    floor: f64,
    seed: u64,
) -> Result<(Vec<Action<T>>, PerturbationSpec, usize), PerturbError> {
    let draw = draw_offset(sigma, floor, seed, PerturbConfig::default().max_resamples)?;
    let out = translation_edit(actions, keyframe, window, draw.offset_x, draw.offset_y)?;
    let mut spec = PerturbationSpec::bare(FailureType::Translation, keyframe, seed);
    spec.window = Some(window);
    spec.sigma = Some(sigma);
    spec.offset_x = Some(draw.offset_x);
    spec.offset_y = Some(draw.offset_y);
    Ok((out, spec, draw.rejected))
}

/// Result of [`sample_perturbation`].
#[derive(Debug, Clone)]
pub struct Injected<T> {
    pub actions: Vec<Action<T>>,
    pub spec: PerturbationSpec,
    /// Translation draws discarded by the failure floor.
    pub rejected_draws: usize,
}

/// Samples parameters from `cfg` under `seed` and injects `failure_type` at the first
/// closing keyframe. `floor` is the scene's grasp tolerance.
pub fn sample_perturbation<T: Scalar>(
    actions: &[Action<T>],
    failure_type: FailureType,
    cfg: &PerturbConfig,
    floor: f64,
    seed: u64,
) -> Result<Injected<T>, PerturbError> {
    let keyframe = closing_keyframe(actions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (actions, spec, rejected_draws) = match failure_type {
        FailureType::DelayClose => {
            let [lo, hi] = cfg.delay_steps;
            let delay = rng.random_range(lo..=hi.max(lo));
            let (a, s) = inject_delay_close(actions, keyframe, delay, seed)?;
            (a, s, 0)
        }
        FailureType::WeakClose => {
            let [lo, hi] = cfg.strength_scale;
            // two decimals keep the recorded scale short and exactly reproducible
            let raw = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let scale = (raw * 100.0).round() / 100.0;
            let (a, s) = inject_weak_close(actions, keyframe, scale, seed)?;
            (a, s, 0)
        }
        FailureType::ForceOpen => {
            let (a, s) = inject_force_open(actions, keyframe, cfg.window, seed)?;
            (a, s, 0)
        }
        FailureType::Translation => {
            let draw = draw_offset(cfg.sigma, floor, seed, cfg.max_resamples)?;
            let a = translation_edit(actions, keyframe, cfg.window, draw.offset_x, draw.offset_y)?;
            let mut s = PerturbationSpec::bare(FailureType::Translation, keyframe, seed);
            s.window = Some(cfg.window);
            s.sigma = Some(cfg.sigma);
            s.offset_x = Some(draw.offset_x);
            s.offset_y = Some(draw.offset_y);
            (a, s, draw.rejected)
        }
    };
    Ok(Injected {
        actions,
        spec,
        rejected_draws,
    })
}
