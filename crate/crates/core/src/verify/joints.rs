//! Kinematic safety: joint limits plus p95-calibrated velocity and acceleration bounds.

use serde::{Deserialize, Serialize};

use super::Pooling;
use crate::model::{JointTrace, Rollout, JOINTS};
use crate::scalar::Scalar;
use crate::stats::quantile;

/// Franka Emika Panda joint position limits, radians.
pub const FRANKA_Q_MIN: [f64; JOINTS] = [-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973];
pub const FRANKA_Q_MAX: [f64; JOINTS] = [2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JointError {
    #[error("calibration needs at least one success rollout with joints")]
    Empty,
    #[error("rollout {0} has no joint trace")]
    MissingJoints(String),
    #[error("invalid calibration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointConfig {
    pub percentile: f64,
    pub pooling: Pooling,
    pub q_min: [f64; JOINTS],
    pub q_max: [f64; JOINTS],
    /// Absolute slack on the velocity and acceleration comparisons, so values equal
    /// to the threshold up to rounding do not count as exceedances.
    pub limit_eps: f64,
    /// Lower bound on both calibrated thresholds.
    pub tau_floor: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            percentile: 0.95,
            pooling: Pooling::PerRollout,
            q_min: FRANKA_Q_MIN,
            q_max: FRANKA_Q_MAX,
            limit_eps: 1e-9,
            tau_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCalibration {
    pub q_min: [f64; JOINTS],
    pub q_max: [f64; JOINTS],
    /// rad/step
    pub tau_v: f64,
    /// rad/step^2
    pub tau_a: f64,
    pub percentile: f64,
    pub pooling: Pooling,
    pub limit_eps: f64,
    pub rollouts: usize,
}

impl JointCalibration {
    pub fn validate(&self) -> Result<(), JointError> {
        if (0..JOINTS).any(|j| !(self.q_min[j] < self.q_max[j])) {
            return Err(JointError::Invalid("q_min must be below q_max".into()));
        }
        if !(self.tau_v > 0.0 && self.tau_a > 0.0) {
            return Err(JointError::Invalid(format!(
                "thresholds must be positive, got tau_v = {}, tau_a = {}",
                self.tau_v, self.tau_a
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Limit,
    Velocity,
    Acceleration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointViolation {
    pub t: usize,
    pub j: usize,
    pub kind: ViolationKind,
}

/// Central first differences, one-sided at the ends.
pub fn velocities<T: Scalar>(q: &[[T; JOINTS]]) -> Vec<[T; JOINTS]> {
    let n = q.len();
    if n < 2 {
        return vec![[T::zero(); JOINTS]; n];
    }
    let half = T::lit(0.5);
    (0..n)
        .map(|t| {
            std::array::from_fn(|j| match t {
                0 => q[1][j] - q[0][j],
                t if t == n - 1 => q[t][j] - q[t - 1][j],
                t => (q[t + 1][j] - q[t - 1][j]) * half,
            })
        })
        .collect()
}

/// Central second differences; the end frames reuse the nearest interior stencil.
pub fn accelerations<T: Scalar>(q: &[[T; JOINTS]]) -> Vec<[T; JOINTS]> {
    let n = q.len();
    if n < 3 {
        return vec![[T::zero(); JOINTS]; n];
    }
    let second = |c: usize, j: usize| q[c + 1][j] - q[c][j] - q[c][j] + q[c - 1][j];
    (0..n)
        .map(|t| std::array::from_fn(|j| second(t.clamp(1, n - 2), j)))
        .collect()
}

/// Every `(t, j, kind)` outside the limits or above a threshold; passes iff empty.
pub fn verify_joints<T: Scalar>(joints: &JointTrace<T>, calib: &JointCalibration) -> (Vec<JointViolation>, bool) {
    let q = &joints.q;
    let v = velocities(q);
    let a = accelerations(q);
    let mut out = Vec::new();
    for t in 0..q.len() {
        for j in 0..JOINTS {
            let qj = q[t][j].as_f64();
            if qj < calib.q_min[j] || qj > calib.q_max[j] {
                out.push(JointViolation {
                    t,
                    j,
                    kind: ViolationKind::Limit,
                });
            }
            if v[t][j].abs().as_f64() > calib.tau_v + calib.limit_eps {
                out.push(JointViolation {
                    t,
                    j,
                    kind: ViolationKind::Velocity,
                });
            }
            if a[t][j].abs().as_f64() > calib.tau_a + calib.limit_eps {
                out.push(JointViolation {
                    t,
                    j,
                    kind: ViolationKind::Acceleration,
                });
            }
        }
    }
    let pass = out.is_empty();
    (out, pass)
}

/// Pooled `(|q̇|, |q̈|)` statistics under a pooling mode: every `(t, j)` sample, or
/// one maximum per rollout.
pub fn pooled_magnitudes<T: Scalar>(traces: &[&JointTrace<T>], pooling: Pooling) -> (Vec<f64>, Vec<f64>) {
    let (mut pv, mut pa) = (Vec::new(), Vec::new());
    for tr in traces {
        let v = velocities(&tr.q);
        let a = accelerations(&tr.q);
        let flat = |m: &Vec<[T; JOINTS]>| m.iter().flatten().map(|x| x.abs().as_f64()).collect::<Vec<_>>();
        let (fv, fa) = (flat(&v), flat(&a));
        match pooling {
            Pooling::Samples => {
                pv.extend(fv);
                pa.extend(fa);
            }
            Pooling::PerRollout => {
                pv.push(fv.iter().copied().fold(0.0, f64::max));
                pa.push(fa.iter().copied().fold(0.0, f64::max));
            }
        }
    }
    (pv, pa)
}

pub fn calibrate_joints<T: Scalar>(success: &[Rollout<T>], cfg: &JointConfig) -> Result<JointCalibration, JointError> {
    if success.is_empty() {
        return Err(JointError::Empty);
    }
    if let Some(r) = success.iter().find(|r| r.joints.is_empty()) {
        return Err(JointError::MissingJoints(r.id.clone()));
    }
    let traces: Vec<_> = success.iter().map(|r| &r.joints).collect();
    let (pv, pa) = pooled_magnitudes(&traces, cfg.pooling);
    let q = |s: &[f64]| quantile(s, cfg.percentile).map_err(|e| JointError::Invalid(e.to_string()));
    let calib = JointCalibration {
        q_min: cfg.q_min,
        q_max: cfg.q_max,
        tau_v: q(&pv)?.max(cfg.tau_floor),
        tau_a: q(&pa)?.max(cfg.tau_floor),
        percentile: cfg.percentile,
        pooling: cfg.pooling,
        limit_eps: cfg.limit_eps,
        rollouts: success.len(),
    };
    calib.validate()?;
    Ok(calib)
}

/// Fractions of rollouts in which any `(t, j)` exceeds `tau_v` (omega) or `tau_a` (alpha).
pub fn exceedance<T: Scalar>(traces: &[&JointTrace<T>], tau_v: f64, tau_a: f64) -> (f64, f64) {
    if traces.is_empty() {
        return (0.0, 0.0);
    }
    let (mv, ma) = pooled_magnitudes(traces, Pooling::PerRollout);
    let n = traces.len() as f64;
    (
        mv.iter().filter(|&&v| v > tau_v).count() as f64 / n,
        ma.iter().filter(|&&a| a > tau_a).count() as f64 / n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calib(tau_v: f64, tau_a: f64) -> JointCalibration {
        JointCalibration {
            q_min: FRANKA_Q_MIN,
            q_max: FRANKA_Q_MAX,
            tau_v,
            tau_a,
            percentile: 0.95,
            pooling: Pooling::Samples,
            limit_eps: 0.0,
            rollouts: 1,
        }
    }

    const HOME: [f64; JOINTS] = [0.0, -0.3, 0.0, -2.2, 0.0, 1.9, 0.785];

    #[test]
    fn constant_trace_passes() {
        let tr = JointTrace { q: vec![HOME; 10] };
        let (v, pass) = verify_joints(&tr, &calib(0.01, 0.01));
        assert!(pass && v.is_empty());
    }

    #[test]
    fn spike_is_an_acceleration_violation_at_its_frame() {
        let mut tr = JointTrace { q: vec![HOME; 10] };
        tr.q[5][2] += 0.5;
        let (v, pass) = verify_joints(&tr, &calib(10.0, 0.9));
        assert!(!pass);
        // |q̈| = 1.0 at the spike, 0.5 next to it
        assert_eq!(
            v,
            vec![JointViolation {
                t: 5,
                j: 2,
                kind: ViolationKind::Acceleration
            }]
        );
    }

    #[test]
    fn limit_violation_at_final_frame() {
        let mut tr = JointTrace { q: vec![HOME; 6] };
        tr.q[5][3] = -0.01;
        let (v, pass) = verify_joints(&tr, &calib(10.0, 10.0));
        assert!(!pass);
        assert!(v.contains(&JointViolation {
            t: 5,
            j: 3,
            kind: ViolationKind::Limit
        }));
    }

    #[test]
    fn finite_differences_by_hand() {
        let q: Vec<[f64; JOINTS]> = [0.0, 1.0, 4.0, 9.0].iter().map(|&x| [x; JOINTS]).collect();
        let v: Vec<f64> = velocities(&q).iter().map(|r| r[0]).collect();
        let a: Vec<f64> = accelerations(&q).iter().map(|r| r[0]).collect();
        assert_eq!(v, vec![1.0, 2.0, 4.0, 5.0]);
        assert_eq!(a, vec![2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn constant_speed_sets_tau_v() {
        let q: Vec<[f64; JOINTS]> = (0..20).map(|t| [0.01 * t as f64; JOINTS]).collect();
        let r = Rollout {
            id: "a".into(),
            task: String::new(),
            states: vec![Default::default(); 20],
            actions: vec![Default::default(); 19],
            joints: JointTrace { q },
            tracks: Default::default(),
            spec: None,
            outcome: None,
        };
        let cfg = JointConfig {
            q_min: [-10.0; JOINTS],
            q_max: [10.0; JOINTS],
            ..Default::default()
        };
        for pooling in [Pooling::Samples, Pooling::PerRollout] {
            let c = calibrate_joints(std::slice::from_ref(&r), &JointConfig { pooling, ..cfg.clone() }).unwrap();
            assert!((c.tau_v - 0.01).abs() < 1e-12);
            assert_eq!(c.tau_a, cfg.tau_floor);
        }
    }
}
