//! Rollout data model, keyframe detection and end-effector state differences.
//!
//! A rollout with `T` actions has `T + 1` states. The gripper field of state `t`
//! records the command executing at frame `t` (the final state repeats the last
//! command), so keyframe indices on states and on the action timeline coincide.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::perturb::PerturbationSpec;
use crate::scalar::{wrap_angle, Scalar};

/// Number of arm joints in a joint trace.
pub const JOINTS: usize = 7;

/// Default gripper threshold separating the open side from the closed side.
pub const GRIPPER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("rollout has {states} states and {actions} actions; expected states = actions + 1")]
    Length { states: usize, actions: usize },
    #[error("rollout needs at least 2 states, got {0}")]
    TooShort(usize),
    #[error("non-finite value in {field} at index {index}")]
    NonFinite { field: &'static str, index: usize },
    #[error("gripper value {value} at index {index} outside [0, 1]")]
    Gripper { index: usize, value: f64 },
    #[error("action {index} exceeds max step magnitude {limit}")]
    StepTooLarge { index: usize, limit: f64 },
    #[error("joint trace has {rows} rows for {states} states")]
    JointRows { rows: usize, states: usize },
    #[error("track {track} has {len} samples for {states} states")]
    TrackLength { track: usize, len: usize, states: usize },
    #[error("track set has {points} point tracks and {masks} mask rows")]
    TrackMasks { points: usize, masks: usize },
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error("state index out of range: t = {t}, d = {d}, last = {last}")]
    Range { t: usize, d: usize, last: usize },
    #[error("duplicate rollout id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EndEffectorState<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
    /// 1 = fully open, 0 = fully closed.
    pub gripper: T,
}

impl<T: Scalar> EndEffectorState<T> {
    pub fn pose(&self) -> [T; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn position(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_pose(pose: [T; 6], gripper: T) -> Self {
        Self {
            x: pose[0],
            y: pose[1],
            z: pose[2],
            roll: pose[3],
            pitch: pose[4],
            yaw: pose[5],
            gripper,
        }
    }

    fn is_finite(&self) -> bool {
        self.pose().iter().all(|v| v.is_finite()) && self.gripper.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Action<T> {
    pub dx: T,
    pub dy: T,
    pub dz: T,
    pub droll: T,
    pub dpitch: T,
    pub dyaw: T,
    pub gripper_cmd: T,
}

impl<T: Scalar> Action<T> {
    pub fn delta(&self) -> [T; 6] {
        [self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw]
    }

    pub fn from_delta(delta: [T; 6], gripper_cmd: T) -> Self {
        Self {
            dx: delta[0],
            dy: delta[1],
            dz: delta[2],
            droll: delta[3],
            dpitch: delta[4],
            dyaw: delta[5],
            gripper_cmd,
        }
    }

    /// Largest absolute per-step delta across the six pose channels.
    pub fn max_step(&self) -> T {
        self.delta().iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Per-frame joint angles, radians.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct JointTrace<T> {
    pub q: Vec<[T; JOINTS]>,
}

impl<T: Scalar> JointTrace<T> {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Tracked 2D points (pixels) with per-frame visibility.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrackSet<T> {
    /// `points[i][t]` is the position of track `i` at frame `t`.
    pub points: Vec<Vec<[T; 2]>>,
    pub masks: Vec<Vec<bool>>,
}

impl<T: Scalar> TrackSet<T> {
    pub fn num_tracks(&self) -> usize {
        self.points.len()
    }

    pub fn num_frames(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self, frames: usize) -> Result<(), ModelError> {
        if self.points.len() != self.masks.len() {
            return Err(ModelError::TrackMasks {
                points: self.points.len(),
                masks: self.masks.len(),
            });
        }
        for (i, (track, mask)) in self.points.iter().zip(&self.masks).enumerate() {
            if track.len() != frames || mask.len() != frames {
                return Err(ModelError::TrackLength {
                    track: i,
                    len: track.len().min(mask.len()),
                    states: frames,
                });
            }
            for (p, &visible) in track.iter().zip(mask) {
                if visible && !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(ModelError::NonFinite {
                        field: "tracks",
                        index: i,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureType {
    Translation,
    WeakClose,
    ForceOpen,
    DelayClose,
}

impl FailureType {
    pub const ALL: [FailureType; 4] = [
        FailureType::Translation,
        FailureType::WeakClose,
        FailureType::ForceOpen,
        FailureType::DelayClose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureType::Translation => "translation",
            FailureType::WeakClose => "weak_close",
            FailureType::ForceOpen => "force_open",
            FailureType::DelayClose => "delay_close",
        }
    }

    pub fn is_gripper(self) -> bool {
        !matches!(self, FailureType::Translation)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for FailureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Rollout<T> {
    pub id: String,
    pub task: String,
    pub states: Vec<EndEffectorState<T>>,
    pub actions: Vec<Action<T>>,
    #[serde(default)]
    pub joints: JointTrace<T>,
    #[serde(default)]
    pub tracks: TrackSet<T>,
    #[serde(default)]
    pub spec: Option<PerturbationSpec>,
    #[serde(default)]
    pub outcome: Option<Outcome>,
}

impl<T: Scalar> Rollout<T> {
    /// Number of actions (the horizon `T`).
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn gripper_channel(&self) -> Vec<T> {
        self.states.iter().map(|s| s.gripper).collect()
    }

    /// Checks every structural invariant. Joints and tracks may be empty before
    /// observations are synthesized; when present they must match the state count.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_with_step_limit(None)
    }

    pub fn validate_with_step_limit(&self, max_step: Option<f64>) -> Result<(), ModelError> {
        let n = self.states.len();
        if n != self.actions.len() + 1 {
            return Err(ModelError::Length {
                states: n,
                actions: self.actions.len(),
            });
        }
        for (i, s) in self.states.iter().enumerate() {
            if !s.is_finite() {
                return Err(ModelError::NonFinite {
                    field: "states",
                    index: i,
                });
            }
            if s.gripper < T::zero() || s.gripper > T::one() {
                return Err(ModelError::Gripper {
                    index: i,
                    value: s.gripper.as_f64(),
                });
            }
        }
        for (i, a) in self.actions.iter().enumerate() {
            if !(a.delta().iter().all(|v| v.is_finite()) && a.gripper_cmd.is_finite()) {
                return Err(ModelError::NonFinite {
                    field: "actions",
                    index: i,
                });
            }
            if a.gripper_cmd < T::zero() || a.gripper_cmd > T::one() {
                return Err(ModelError::Gripper {
                    index: i,
                    value: a.gripper_cmd.as_f64(),
                });
            }
            if let Some(limit) = max_step {
                if a.max_step().as_f64() > limit {
                    return Err(ModelError::StepTooLarge { index: i, limit });
                }
            }
        }
        if !self.joints.is_empty() {
            if self.joints.len() != n {
                return Err(ModelError::JointRows {
                    rows: self.joints.len(),
                    states: n,
                });
            }
            for (i, row) in self.joints.q.iter().enumerate() {
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(ModelError::NonFinite {
                        field: "joints",
                        index: i,
                    });
                }
            }
        }
        if !self.tracks.is_empty() {
            self.tracks.validate(n)?;
        }
        Ok(())
    }
}

/// Indices `t` where the gripper crosses `threshold` between `t - 1` and `t`, in
/// either direction. The index is the first frame on the new side.
pub fn detect_keyframes<T: Scalar>(
    rollout: &Rollout<T>,
    threshold: f64,
) -> Result<Vec<usize>, ModelError> {
    if rollout.states.len() < 2 {
        return Err(ModelError::TooShort(rollout.states.len()));
    }
    gripper_crossings(&rollout.gripper_channel(), threshold)
}

/// Crossings of an arbitrary gripper channel (states or commands).
pub fn gripper_crossings<T: Scalar>(channel: &[T], threshold: f64) -> Result<Vec<usize>, ModelError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ModelError::Threshold(threshold));
    }
    let thr = T::lit(threshold);
    Ok(channel
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] >= thr) != (w[1] >= thr))
        .map(|(i, _)| i + 1)
        .collect())
}

/// Crossings from the open side to the closed side only.
pub fn closing_crossings<T: Scalar>(channel: &[T], threshold: f64) -> Result<Vec<usize>, ModelError> {
    let thr = T::lit(threshold);
    Ok(gripper_crossings(channel, threshold)?
        .into_iter()
        .filter(|&t| channel[t] < thr)
        .collect())
}

/// `s[t + d] - s[t]` over the six pose channels; angles on the shortest arc.
pub fn state_diff<T: Scalar>(rollout: &Rollout<T>, t: usize, d: usize) -> Result<[T; 6], ModelError> {
    let last = rollout.states.len().saturating_sub(1);
    if rollout.states.is_empty() || t.checked_add(d).is_none_or(|e| e > last) {
        return Err(ModelError::Range { t, d, last });
    }
    Ok(pose_diff(&rollout.states[t].pose(), &rollout.states[t + d].pose()))
}

/// `to - from` with the three angle channels wrapped onto (-pi, pi].
pub fn pose_diff<T: Scalar>(from: &[T; 6], to: &[T; 6]) -> [T; 6] {
    let mut out = [T::zero(); 6];
    for k in 0..6 {
        let d = to[k] - from[k];
        out[k] = if k >= 3 { wrap_angle(d) } else { d };
    }
    out
}

/// Fails on the first duplicated id.
pub fn check_unique_ids<'a, I: IntoIterator<Item = &'a str>>(ids: I) -> Result<(), ModelError> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(ModelError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

/// Reads one JSON record per non-empty line.
pub fn read_jsonl<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, JsonlError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| JsonlError::Io {
        path: display.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
                path: display.clone(),
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<R: Serialize>(path: &Path, records: &[R]) -> Result<(), JsonlError> {
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("records serialize");
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
