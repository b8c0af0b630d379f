//! Observation rendering for surrogate rollouts: projected point tracks, a joint
//! trace from a fixed pose-to-joint map, and optional synthesis artifacts.

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{simulate, SceneSpec};
use crate::model::{JointTrace, TrackSet, JOINTS};
use crate::Rollout;

pub const GRID_W: usize = 10;
pub const GRID_H: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObserveError {
    #[error("world point {0:?} projects behind the camera")]
    BehindCamera([f64; 3]),
    #[error("rollout has {states} states but the replay produced {replayed}")]
    Replay { states: usize, replayed: usize },
}

/// Pinhole camera looking from `position` at `target`, z-up world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub position: [f64; 3],
    pub target: [f64; 3],
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fx: 120.0,
            fy: 120.0,
            cx: 160.0,
            cy: 120.0,
            position: [0.5, -0.9, 0.9],
            target: [0.5, 0.0, 0.0],
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

impl Camera {
    fn basis(&self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        let forward = normalize(sub(self.target, self.position));
        let right = normalize(cross(forward, [0.0, 0.0, 1.0]));
        let down = cross(forward, right);
        (right, down, forward)
    }

    pub fn project(&self, p: [f64; 3]) -> Result<[f64; 2], ObserveError> {
        let (right, down, forward) = self.basis();
        let rel = sub(p, self.position);
        let z = dot(forward, rel);
        if z <= 1e-6 {
            return Err(ObserveError::BehindCamera(p));
        }
        Ok([
            self.fx * dot(right, rel) / z + self.cx,
            self.fy * dot(down, rel) / z + self.cy,
        ])
    }
}

/// Surrogate joint map `q = base + A (p - p0) + c * sin(kx x + ky y + phase)`.
///
/// The sinusoidal coupling depends on the planar position only, so purely vertical
/// motion maps to joint velocities `A[:, z] * dz` regardless of where it happens.
#[derive(Debug, Clone)]
pub struct JointModel {
    base: [f64; JOINTS],
    origin: [f64; 6],
    gain: SMatrix<f64, JOINTS, 6>,
    pinv: SMatrix<f64, 6, JOINTS>,
    coupling: [[f64; 4]; JOINTS],
}

impl Default for JointModel {
    fn default() -> Self {
        #[rustfmt::skip]
        let gain = SMatrix::<f64, JOINTS, 6>::from_row_slice(&[
             0.0,  0.5,  0.0, 0.0, 0.0, 0.2,
             0.5,  0.0, -1.0, 0.0, 0.3, 0.0,
             0.0,  0.3,  0.0, 0.4, 0.0, 0.0,
             0.4,  0.0,  1.5, 0.0, 0.0, 0.0,
             0.0, -0.2,  0.0, 0.6, 0.0, 0.3,
            -0.3,  0.0,  1.2, 0.0, 0.5, 0.0,
             0.0,  0.2,  0.0, 0.0, 0.0, 0.8,
        ]);
        let pinv = (gain.transpose() * gain)
            .try_inverse()
            .expect("joint gain has full column rank")
            * gain.transpose();
        let mut coupling = [[0.0; 4]; JOINTS];
        for (j, c) in coupling.iter_mut().enumerate() {
            let amp = if j % 2 == 0 { 0.03 } else { 0.02 };
            *c = [amp, [3.0, 4.0, 2.0][j % 3], [2.0, 3.0, 4.0][j % 3], 0.7 * j as f64];
        }
        Self {
            base: [0.0, -0.3, 0.0, -2.2, 0.0, 1.9, 0.785],
            origin: [0.5, 0.0, 0.1, 0.0, 0.0, 0.0],
            gain,
            pinv,
            coupling,
        }
    }
}

impl JointModel {
    fn coupling_at(&self, x: f64, y: f64) -> SVector<f64, JOINTS> {
        SVector::from_fn(|j, _| {
            let [amp, kx, ky, phase] = self.coupling[j];
            amp * (kx * x + ky * y + phase).sin()
        })
    }

    pub fn forward(&self, pose: &[f64; 6]) -> [f64; JOINTS] {
        let dp = SVector::<f64, 6>::from_fn(|k, _| pose[k] - self.origin[k]);
        let q = self.gain * dp + self.coupling_at(pose[0], pose[1]);
        std::array::from_fn(|j| self.base[j] + q[j])
    }

    /// Least-squares pose for a joint vector, by fixed-point iteration on the coupling.
    pub fn inverse(&self, q: &[f64; JOINTS]) -> [f64; 6] {
        let rhs = SVector::<f64, JOINTS>::from_fn(|j, _| q[j] - self.base[j]);
        let mut pose = self.origin;
        for _ in 0..60 {
            let dp = self.pinv * (rhs - self.coupling_at(pose[0], pose[1]));
            let next: [f64; 6] = std::array::from_fn(|k| self.origin[k] + dp[k]);
            let moved = next.iter().zip(&pose).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            pose = next;
            if moved == 0.0 {
                break;
            }
        }
        pose
    }
}

/// Synthesis artifacts injected into rendered observations. All zero means clean.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactSpec {
    /// Per-sample Gaussian noise on track positions, pixels.
    pub jitter_px: f64,
    /// Per-frame probability that a visible track drops out for one frame.
    pub flicker_rate: f64,
    /// Non-rigid wobbling warp growing over the clip, in units of grid spacing.
    pub topo_warp: f64,
    /// Per-frame random global affine perturbation magnitude.
    pub affine_jitter: f64,
    /// Single-frame offset added to one joint, radians.
    pub joint_spike: f64,
    /// Frames by which the rendered arm and tracks lag the conditioning states.
    pub lag_frames: usize,
}

impl ArtifactSpec {
    pub fn is_clean(&self) -> bool {
        *self == ArtifactSpec::default()
    }

    pub fn is_valid(&self) -> bool {
        [
            self.jitter_px,
            self.flicker_rate,
            self.topo_warp,
            self.affine_jitter,
            self.joint_spike,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
            && self.flicker_rate <= 1.0
    }
}

fn observation_seed(rollout: &Rollout, scene: &SceneSpec) -> u64 {
    let base = rollout.spec.as_ref().map_or(scene.seed, |s| s.seed);
    base ^ 0x6f62_7365_7276_6521
}

/// Renders tracks and joints for `rollout` by replaying its actions in `scene`.
pub fn synthesize_observations(
    rollout: &Rollout,
    scene: &SceneSpec,
    artifacts: &ArtifactSpec,
) -> Result<Rollout, ObserveError> {
    let trace = simulate(scene, &rollout.actions);
    let frames = rollout.states.len();
    if trace.states.len() != frames {
        return Err(ObserveError::Replay {
            states: frames,
            replayed: trace.states.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(observation_seed(rollout, scene));
    let lag = artifacts.lag_frames;
    let shown = |t: usize| t.saturating_sub(lag);
    let cam = &scene.camera;

    // static table grid
    let mut grid_world = Vec::with_capacity(GRID_W * GRID_H);
    for r in 0..GRID_H {
        for c in 0..GRID_W {
            let x = 0.3 + 0.4 * c as f64 / (GRID_W - 1) as f64;
            let y = -0.25 + 0.5 * r as f64 / (GRID_H - 1) as f64;
            grid_world.push([x, y, 0.0]);
        }
    }
    let grid_px = grid_world
        .iter()
        .map(|&p| cam.project(p))
        .collect::<Result<Vec<_>, _>>()?;
    let spacing = mean_neighbor_spacing(&grid_px);

    let object_px = (0..frames)
        .map(|t| cam.project(trace.object[shown(t)]))
        .collect::<Result<Vec<_>, _>>()?;
    let gripper_px = (0..frames)
        .map(|t| cam.project(trace.states[shown(t)].position()))
        .collect::<Result<Vec<_>, _>>()?;

    let object_cell = nearest(&grid_px, object_px[0], None);
    let gripper_cell = nearest(&grid_px, gripper_px[0], Some(object_cell));

    let mut points: Vec<Vec<[f64; 2]>> = (0..grid_px.len())
        .map(|i| match i {
            i if i == object_cell => object_px.clone(),
            i if i == gripper_cell => gripper_px.clone(),
            i => vec![grid_px[i]; frames],
        })
        .collect();

    // Draw every random number regardless of magnitudes so artifact strengths are
    // coupled through the same noise realisation.
    let n = points.len();
    let mut flicker_u = vec![vec![0.0f64; frames]; n];
    let mut noise = vec![vec![[0.0f64; 2]; frames]; n];
    for i in 0..n {
        for t in 0..frames {
            flicker_u[i][t] = rng.random::<f64>();
            noise[i][t] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        }
    }
    let affine: Vec<[f64; 6]> = (0..frames)
        .map(|_| std::array::from_fn(|_| rng.sample(StandardNormal)))
        .collect();
    let spike_lo = frames / 3;
    let spike_frame = rng.random_range(spike_lo..(2 * frames / 3).max(spike_lo + 1));
    let spike_joint = rng.random_range(0..JOINTS);

    let horizon = (frames - 1).max(1) as f64;
    let center = [cam.cx, cam.cy];
    let wavelength = 2.5 * spacing;
    for (i, track) in points.iter_mut().enumerate() {
        let p0 = track[0];
        let field = [
            (std::f64::consts::TAU * p0[1] / wavelength).sin(),
            (std::f64::consts::TAU * p0[0] / wavelength).cos(),
        ];
        for (t, p) in track.iter_mut().enumerate() {
            if artifacts.topo_warp > 0.0 {
                let ramp = t as f64 / horizon;
                let wobble = 1.0 + 0.5 * (std::f64::consts::TAU * t as f64 / 5.0).sin();
                let s = artifacts.topo_warp * spacing * ramp * wobble;
                p[0] += s * field[0];
                p[1] += s * field[1];
            }
            if artifacts.affine_jitter > 0.0 && t > 0 {
                let a = artifacts.affine_jitter;
                let m = &affine[t];
                let rel = [p[0] - center[0], p[1] - center[1]];
                p[0] = center[0] + (1.0 + a * m[0]) * rel[0] + a * m[1] * rel[1] + a * spacing * m[4];
                p[1] = center[1] + a * m[2] * rel[0] + (1.0 + a * m[3]) * rel[1] + a * spacing * m[5];
            }
            if artifacts.jitter_px > 0.0 {
                p[0] += artifacts.jitter_px * noise[i][t][0];
                p[1] += artifacts.jitter_px * noise[i][t][1];
            }
        }
    }

    let masks = flicker_u
        .iter()
        .map(|u| {
            // single-frame dropouts: a visible track blinks out with probability
            // `flicker_rate` and always reappears on the next frame
            let mut visible = true;
            u.iter()
                .enumerate()
                .map(|(t, &ut)| {
                    visible = !(t > 0 && visible && ut < artifacts.flicker_rate);
                    visible
                })
                .collect()
        })
        .collect();

    let model = JointModel::default();
    let mut q: Vec<[f64; JOINTS]> = (0..frames)
        .map(|t| model.forward(&trace.states[shown(t)].pose()))
        .collect();
    if artifacts.joint_spike > 0.0 {
        q[spike_frame][spike_joint] += artifacts.joint_spike;
    }

    let mut out = rollout.clone();
    out.tracks = TrackSet { points, masks };
    out.joints = JointTrace { q };
    Ok(out)
}

fn nearest(grid: &[[f64; 2]], p: [f64; 2], skip: Option<usize>) -> usize {
    grid.iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .min_by(|(_, a), (_, b)| {
            let da = (a[0] - p[0]).powi(2) + (a[1] - p[1]).powi(2);
            let db = (b[0] - p[0]).powi(2) + (b[1] - p[1]).powi(2);
            da.total_cmp(&db)
        })
        .map(|(i, _)| i)
        .expect("non-empty grid")
}

fn mean_neighbor_spacing(grid: &[[f64; 2]]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..GRID_H {
        for c in 0..GRID_W - 1 {
            let a = grid[r * GRID_W + c];
            let b = grid[r * GRID_W + c + 1];
            total += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            count += 1;
        }
    }
    total / count as f64
}
