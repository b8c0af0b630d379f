//! Kinematic surrogate for the action-conditioned world model.
//!
//! The surrogate scripts pick-and-place demonstrations, replays arbitrary action
//! sequences against a single rigid object, and renders tracks and joint traces
//! (see [`observe`]). Dynamics are purely kinematic.
//!
//! Attachment rules (surrogate version [`SURROGATE_VERSION`]):
//! - closing depth is `1 - gripper_cmd`;
//! - with the end effector closer than `grasp_tolerance` to the object, depth
//!   `>= attach_strength` grasps firmly and depth in `[CONTACT_DEPTH, attach_strength)`
//!   grasps partially;
//! - a partial grasp slips after [`SLIP_DELAY`] steps and the object drops to its
//!   rest height; deepening to `attach_strength` before then makes it firm;
//! - any grasp releases once depth falls below [`CONTACT_DEPTH`].

pub mod observe;

use serde::{Deserialize, Serialize};

use crate::model::{Action, EndEffectorState, Outcome};
use crate::Rollout;

pub use observe::{synthesize_observations, ArtifactSpec, Camera, JointModel, ObserveError};

pub const SURROGATE_VERSION: &str = "kinematic-v1";

/// Closing depth below which the gripper exerts no grip.
pub const CONTACT_DEPTH: f64 = 0.2;
/// Steps a partial grasp holds before the object slips.
pub const SLIP_DELAY: usize = 4;
/// Height of the approach and transport plane above the object rest height.
pub const HOVER_HEIGHT: f64 = 0.10;
/// Steps the arm stays still after commanding the close.
pub const GRASP_DWELL: usize = 2;

pub const DEFAULT_TASK: &str = "pick up the block and place it on the goal marker";

/// Reachable workspace box, meters: `[min, max]` per axis.
pub const WORKSPACE: [[f64; 2]; 3] = [[0.25, 0.75], [-0.30, 0.30], [0.0, 0.35]];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("{what} at {pos:?} lies outside the reachable workspace")]
    Unreachable { what: &'static str, pos: [f64; 3] },
    #[error("grasp tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("attach strength {0} outside (CONTACT_DEPTH, 1]")]
    AttachStrength(f64),
    #[error("horizon {0} below the minimum of 20 steps")]
    Horizon(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub object_pos: [f64; 3],
    pub goal_pos: [f64; 3],
    /// End-effector position at frame 0; orientation starts at zero.
    #[serde(default = "default_start")]
    pub start_pos: [f64; 3],
    pub grasp_tolerance: f64,
    pub attach_strength: f64,
    #[serde(default)]
    pub camera: Camera,
    pub seed: u64,
}

fn default_start() -> [f64; 3] {
    [0.45, 0.0, 0.02 + HOVER_HEIGHT]
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            object_pos: [0.50, -0.12, 0.02],
            goal_pos: [0.55, 0.15, 0.02],
            start_pos: default_start(),
            grasp_tolerance: 0.01,
            attach_strength: 0.8,
            camera: Camera::default(),
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.grasp_tolerance > 0.0) {
            return Err(SceneError::Tolerance(self.grasp_tolerance));
        }
        if !(self.attach_strength > CONTACT_DEPTH && self.attach_strength <= 1.0) {
            return Err(SceneError::AttachStrength(self.attach_strength));
        }
        let inside = |p: &[f64; 3]| (0..3).all(|k| p[k] >= WORKSPACE[k][0] && p[k] <= WORKSPACE[k][1]);
        for (what, p) in [
            ("object", self.object_pos),
            ("goal", self.goal_pos),
            ("start", self.start_pos),
        ] {
            if !inside(&p) {
                return Err(SceneError::Unreachable { what, pos: p });
            }
        }
        for (what, p) in [("object hover", self.object_pos), ("goal hover", self.goal_pos)] {
            let hover = [p[0], p[1], p[2] + HOVER_HEIGHT];
            if !inside(&hover) {
                return Err(SceneError::Unreachable { what, pos: hover });
            }
        }
        Ok(())
    }
}

/// Sampling ranges for randomized scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneDistribution {
    pub object_x: [f64; 2],
    pub object_y: [f64; 2],
    pub goal_x: [f64; 2],
    pub goal_y: [f64; 2],
    pub rest_z: f64,
    pub grasp_tolerance: f64,
    pub attach_strength: f64,
    pub camera: Camera,
}

impl Default for SceneDistribution {
    fn default() -> Self {
        Self {
            object_x: [0.40, 0.60],
            object_y: [-0.22, -0.02],
            goal_x: [0.40, 0.60],
            goal_y: [0.02, 0.22],
            rest_z: 0.02,
            grasp_tolerance: 0.01,
            attach_strength: 0.8,
            camera: Camera::default(),
        }
    }
}

impl SceneDistribution {
    pub fn sample(&self, seed: u64) -> SceneSpec {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: [f64; 2]| if r[1] > r[0] { rng.random_range(r[0]..r[1]) } else { r[0] };
        let object_pos = [draw(self.object_x), draw(self.object_y), self.rest_z];
        let goal_pos = [draw(self.goal_x), draw(self.goal_y), self.rest_z];
        SceneSpec {
            object_pos,
            goal_pos,
            start_pos: [0.45, 0.0, self.rest_z + HOVER_HEIGHT],
            grasp_tolerance: self.grasp_tolerance,
            attach_strength: self.attach_strength,
            camera: self.camera.clone(),
            seed,
        }
    }
}

/// Step counts of the scripted phases for a given horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhasePlan {
    pub approach: usize,
    pub descend: usize,
    pub dwell: usize,
    pub lift: usize,
    pub transport: usize,
    pub place: usize,
    pub hold: usize,
}

impl PhasePlan {
    pub fn for_horizon(horizon: usize) -> Result<Self, SceneError> {
        if horizon < 20 {
            return Err(SceneError::Horizon(horizon));
        }
        let h = horizon as f64;
        let r = |f: f64| ((h * f).round() as usize).max(1);
        let mut p = PhasePlan {
            approach: r(0.20),
            descend: r(1.0 / 6.0),
            dwell: GRASP_DWELL,
            lift: r(1.0 / 12.0),
            transport: r(0.30),
            place: r(0.13),
            hold: 0,
        };
        let busy = p.approach + p.descend + p.dwell + p.lift + p.transport + p.place;
        let need = busy + 2;
        if need > horizon {
            let deficit = need - horizon;
            p.transport -= deficit.min(p.transport - 1);
        }
        let busy = p.approach + p.descend + p.dwell + p.lift + p.transport + p.place;
        p.hold = horizon - busy;
        Ok(p)
    }

    /// Action index of the closing command.
    pub fn grasp_keyframe(&self) -> usize {
        self.approach + self.descend
    }

    /// Action index of the reopening command.
    pub fn release_keyframe(&self) -> usize {
        self.grasp_keyframe() + self.dwell + self.lift + self.transport + self.place
    }
}

fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

/// Per-step deltas moving `from` to `to` along a smoothstep profile.
fn segment(from: [f64; 3], to: [f64; 3], steps: usize) -> Vec<[f64; 3]> {
    (0..steps)
        .map(|k| {
            let a = smoothstep(k as f64 / steps as f64);
            let b = smoothstep((k + 1) as f64 / steps as f64);
            let w = b - a;
            [(to[0] - from[0]) * w, (to[1] - from[1]) * w, (to[2] - from[2]) * w]
        })
        .collect()
}

/// Scripted successful pick-and-place: approach, descend, close, lift, transport,
/// lower and release, then hold still.
pub fn script_success(scene: &SceneSpec, horizon: usize) -> Result<Rollout, SceneError> {
    scene.validate()?;
    let plan = PhasePlan::for_horizon(horizon)?;
    let obj = scene.object_pos;
    let goal = scene.goal_pos;
    let above_obj = [obj[0], obj[1], obj[2] + HOVER_HEIGHT];
    let above_goal = [goal[0], goal[1], goal[2] + HOVER_HEIGHT];
    let start = scene.start_pos;

    let mut deltas = Vec::with_capacity(horizon);
    deltas.extend(segment(start, above_obj, plan.approach));
    deltas.extend(segment(above_obj, obj, plan.descend));
    deltas.extend(std::iter::repeat_n([0.0; 3], plan.dwell));
    deltas.extend(segment(obj, above_obj, plan.lift));
    deltas.extend(segment(above_obj, above_goal, plan.transport));
    deltas.extend(segment(above_goal, goal, plan.place));
    deltas.extend(std::iter::repeat_n([0.0; 3], plan.hold));
    debug_assert_eq!(deltas.len(), horizon);

    let close = plan.grasp_keyframe();
    let open = plan.release_keyframe();
    let actions: Vec<Action<f64>> = deltas
        .into_iter()
        .enumerate()
        .map(|(t, d)| Action {
            dx: d[0],
            dy: d[1],
            dz: d[2],
            gripper_cmd: if (close..open).contains(&t) { 0.0 } else { 1.0 },
            ..Default::default()
        })
        .collect();
    let mut rollout = resimulate(scene, &actions);
    rollout.id = format!("demo-{:016x}", scene.seed);
    Ok(rollout)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Grip {
    Free,
    Firm { offset: [f64; 3] },
    Partial { offset: [f64; 3], since: usize },
}

/// Full simulator trace, including the object path that the rollout does not store.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub states: Vec<EndEffectorState<f64>>,
    pub object: Vec<[f64; 3]>,
    pub outcome: Outcome,
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Integrates `actions` from the scene start state and tracks the object.
pub fn simulate(scene: &SceneSpec, actions: &[Action<f64>]) -> SimTrace {
    let mut pose = [scene.start_pos[0], scene.start_pos[1], scene.start_pos[2], 0.0, 0.0, 0.0];
    let mut obj = scene.object_pos;
    let rest_z = scene.object_pos[2];
    let mut grip = Grip::Free;
    let mut slipped = false;
    let mut states = Vec::with_capacity(actions.len() + 1);
    let mut object = Vec::with_capacity(actions.len() + 1);

    for (t, a) in actions.iter().enumerate() {
        let g = a.gripper_cmd;
        states.push(EndEffectorState::from_pose(pose, g));
        object.push(obj);
        let depth = 1.0 - g;
        let ee = [pose[0], pose[1], pose[2]];
        let offset_now = [obj[0] - ee[0], obj[1] - ee[1], obj[2] - ee[2]];
        grip = match grip {
            Grip::Free => {
                if !slipped && depth >= CONTACT_DEPTH && dist(&ee, &obj) < scene.grasp_tolerance {
                    if depth >= scene.attach_strength {
                        Grip::Firm { offset: offset_now }
                    } else {
                        Grip::Partial {
                            offset: offset_now,
                            since: t,
                        }
                    }
                } else {
                    Grip::Free
                }
            }
            Grip::Firm { offset } => {
                if depth < CONTACT_DEPTH {
                    Grip::Free
                } else {
                    Grip::Firm { offset }
                }
            }
            Grip::Partial { offset, since } => {
                if depth >= scene.attach_strength {
                    Grip::Firm { offset }
                } else if depth < CONTACT_DEPTH {
                    Grip::Free
                } else if t - since >= SLIP_DELAY {
                    obj[2] = rest_z;
                    slipped = true;
                    Grip::Free
                } else {
                    Grip::Partial { offset, since }
                }
            }
        };
        if slipped && depth < CONTACT_DEPTH {
            slipped = false;
        }
        let d = a.delta();
        for k in 0..6 {
            pose[k] += d[k];
        }
        if let Grip::Firm { offset } | Grip::Partial { offset, .. } = grip {
            obj = [pose[0] + offset[0], pose[1] + offset[1], pose[2] + offset[2]];
        }
    }
    let last_cmd = actions.last().map_or(1.0, |a| a.gripper_cmd);
    states.push(EndEffectorState::from_pose(pose, last_cmd));
    object.push(obj);
    let outcome = if dist(&obj, &scene.goal_pos) < scene.grasp_tolerance {
        Outcome::Success
    } else {
        Outcome::Fail
    };
    SimTrace {
        states,
        object,
        outcome,
    }
}

/// Replays an action sequence. Any sequence yields a rollout; tracks and joints are
/// left empty until [`synthesize_observations`] runs.
pub fn resimulate(scene: &SceneSpec, actions: &[Action<f64>]) -> Rollout {
    let trace = simulate(scene, actions);
    Rollout {
        id: format!("sim-{:016x}", scene.seed),
        task: DEFAULT_TASK.to_string(),
        states: trace.states,
        actions: actions.to_vec(),
        joints: Default::default(),
        tracks: Default::default(),
        spec: None,
        outcome: Some(trace.outcome),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{closing_crossings, detect_keyframes, GRIPPER_THRESHOLD};

    #[test]
    fn default_scene_demo_succeeds_with_one_closing_keyframe() {
        let scene = SceneSpec::default();
        let r = script_success(&scene, 60).unwrap();
        assert_eq!(r.outcome, Some(Outcome::Success));
        r.validate().unwrap();
        let closing = closing_crossings(&r.gripper_channel(), GRIPPER_THRESHOLD).unwrap();
        assert_eq!(closing.len(), 1);
        assert_eq!(closing[0], PhasePlan::for_horizon(60).unwrap().grasp_keyframe());
        assert_eq!(detect_keyframes(&r, 0.5).unwrap().len(), 2);
    }

    #[test]
    fn demos_are_deterministic() {
        let scene = SceneDistribution::default().sample(17);
        let a = serde_json::to_string(&script_success(&scene, 60).unwrap()).unwrap();
        let b = serde_json::to_string(&script_success(&scene, 60).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn object_already_at_goal_is_still_a_success() {
        let mut scene = SceneSpec::default();
        scene.goal_pos = scene.object_pos;
        let r = script_success(&scene, 60).unwrap();
        let trace = simulate(&scene, &r.actions);
        assert_eq!(trace.outcome, Outcome::Success);
        let last = trace.object.last().unwrap();
        assert!(dist(last, &scene.goal_pos) < scene.grasp_tolerance);
    }

    #[test]
    fn replaying_demo_actions_reproduces_states() {
        let scene = SceneSpec::default();
        let demo = script_success(&scene, 60).unwrap();
        let replay = resimulate(&scene, &demo.actions);
        assert_eq!(replay.states, demo.states);
        assert_eq!(replay.outcome, Some(Outcome::Success));
    }

    #[test]
    fn never_closing_never_attaches() {
        let scene = SceneSpec::default();
        let mut actions = script_success(&scene, 60).unwrap().actions;
        for a in &mut actions {
            a.gripper_cmd = a.gripper_cmd.max(0.55);
        }
        assert_eq!(resimulate(&scene, &actions).outcome, Some(Outcome::Fail));
    }

    #[test]
    fn offset_of_twice_tolerance_at_keyframe_fails() {
        let scene = SceneSpec::default();
        let mut actions = script_success(&scene, 60).unwrap().actions;
        let kf = PhasePlan::for_horizon(60).unwrap().grasp_keyframe();
        actions[kf - 1].dx += 2.0 * scene.grasp_tolerance;
        let trace = simulate(&scene, &actions);
        assert!(dist(&trace.states[kf].position(), &scene.object_pos) >= scene.grasp_tolerance);
        assert_eq!(trace.outcome, Outcome::Fail);
    }

    #[test]
    fn partial_grasp_slips_and_drops() {
        let scene = SceneSpec::default();
        let mut actions = script_success(&scene, 60).unwrap().actions;
        for a in &mut actions {
            a.gripper_cmd = 1.0 - 0.5 * (1.0 - a.gripper_cmd);
        }
        let trace = simulate(&scene, &actions);
        assert_eq!(trace.outcome, Outcome::Fail);
        let kf = PhasePlan::for_horizon(60).unwrap().grasp_keyframe();
        // carried briefly, then back on the table
        assert!(trace.object[kf + GRASP_DWELL + 2][2] > scene.object_pos[2]);
        assert_eq!(trace.object.last().unwrap()[2], scene.object_pos[2]);
    }

    #[test]
    fn unreachable_scene_is_rejected() {
        let mut scene = SceneSpec::default();
        scene.object_pos = [1.5, 0.0, 0.02];
        assert!(matches!(script_success(&scene, 60), Err(SceneError::Unreachable { .. })));
        assert!(matches!(
            script_success(&SceneSpec::default(), 19),
            Err(SceneError::Horizon(19))
        ));
    }

    #[test]
    fn phase_plan_fits_every_horizon() {
        for h in 20..200 {
            let p = PhasePlan::for_horizon(h).unwrap();
            let sum = p.approach + p.descend + p.dwell + p.lift + p.transport + p.place + p.hold;
            assert_eq!(sum, h);
            assert!(p.hold >= 2, "horizon {h}");
        }
    }
}
