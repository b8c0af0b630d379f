//! Inverse-dynamics consistency: compares predicted state differences over an
//! interval `d` with the conditioning states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Pooling;
use crate::model::{pose_diff, state_diff, ModelError, Rollout};
use crate::scalar::Scalar;
use crate::stats::quantile;
use crate::world::JointModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IdmError {
    #[error("predictor unavailable: {0}")]
    Unavailable(String),
    #[error("predictor interval {got} differs from calibrated interval {want}")]
    Interval { got: usize, want: usize },
    #[error("rollout {id} is shorter than the interval {d}")]
    TooShort { id: String, d: usize },
    #[error("calibration needs at least one success rollout")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Predicts the end-effector state difference between observation frames `t` and `t + d`.
pub trait StatePredictor<T: Scalar>: Send + Sync {
    fn predict(&self, rollout: &Rollout<T>, t: usize, d: usize) -> Result<[T; 6], IdmError>;

    /// Interval the predictor was built for, if it has one.
    fn interval(&self) -> Option<usize> {
        None
    }
}

/// Reads the true difference from the conditioning states.
#[derive(Debug, Clone, Copy, Default)]
pub struct StateOracle;

impl<T: Scalar> StatePredictor<T> for StateOracle {
    fn predict(&self, rollout: &Rollout<T>, t: usize, d: usize) -> Result<[T; 6], IdmError> {
        Ok(state_diff(rollout, t, d)?)
    }
}

/// Recovers poses from the observed joint trace through the surrogate joint map.
/// On a clean rollout this matches the states to rounding; lagged or corrupted
/// observations show up as error.
#[derive(Debug, Clone, Default)]
pub struct JointInversePredictor {
    pub model: JointModel,
}

impl StatePredictor<f64> for JointInversePredictor {
    fn predict(&self, rollout: &Rollout<f64>, t: usize, d: usize) -> Result<[f64; 6], IdmError> {
        let q = &rollout.joints.q;
        if q.len() != rollout.states.len() {
            return Err(IdmError::Unavailable(format!("rollout {} has no joint observations", rollout.id)));
        }
        if t + d >= q.len() {
            return Err(IdmError::Model(ModelError::Range {
                t,
                d,
                last: q.len() - 1,
            }));
        }
        Ok(pose_diff(&self.model.inverse(&q[t]), &self.model.inverse(&q[t + d])))
    }
}

/// Adds a fixed offset to another predictor.
#[derive(Debug, Clone)]
pub struct Biased<P, T> {
    pub inner: P,
    pub bias: [T; 6],
}

impl<T: Scalar, P: StatePredictor<T>> StatePredictor<T> for Biased<P, T> {
    fn predict(&self, rollout: &Rollout<T>, t: usize, d: usize) -> Result<[T; 6], IdmError> {
        let mut v = self.inner.predict(rollout, t, d)?;
        for k in 0..6 {
            v[k] = v[k] + self.bias[k];
        }
        Ok(v)
    }
}

/// Adds zero-mean Gaussian noise seeded by `(seed, rollout id, t)`, so repeated
/// queries give the same answer.
#[derive(Debug, Clone)]
pub struct Noisy<P> {
    pub inner: P,
    pub sigma_xyz: f64,
    pub sigma_rpy: f64,
    pub seed: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

impl<T: Scalar, P: StatePredictor<T>> StatePredictor<T> for Noisy<P> {
    fn predict(&self, rollout: &Rollout<T>, t: usize, d: usize) -> Result<[T; 6], IdmError> {
        let mut v = self.inner.predict(rollout, t, d)?;
        let key = self.seed ^ fnv1a(rollout.id.as_bytes()) ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let nx = Normal::new(0.0, self.sigma_xyz).map_err(|e| IdmError::Unavailable(e.to_string()))?;
        let nr = Normal::new(0.0, self.sigma_rpy).map_err(|e| IdmError::Unavailable(e.to_string()))?;
        for (k, slot) in v.iter_mut().enumerate() {
            let n = if k < 3 { nx.sample(&mut rng) } else { nr.sample(&mut rng) };
            *slot = *slot + T::lit(n);
        }
        Ok(v)
    }

    fn interval(&self) -> Option<usize> {
        self.inner.interval()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmConfig {
    pub d: usize,
    pub percentile: f64,
    /// Meters per radian applied to the rotation channels before the norm.
    pub radian_weight: f64,
    /// Lower bound on the calibrated threshold.
    pub tau_floor: f64,
    pub pooling: Pooling,
}

impl Default for IdmConfig {
    fn default() -> Self {
        Self {
            d: 4,
            percentile: 0.95,
            radian_weight: 0.1,
            tau_floor: 1e-9,
            pooling: Pooling::PerRollout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdmCalibration {
    pub tau: f64,
    pub d: usize,
    pub percentile: f64,
    pub radian_weight: f64,
    pub pooling: Pooling,
    pub mae_xyz: f64,
    pub mae_rpy: f64,
    pub rollouts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdmResult<T> {
    /// `e` for each sampled pair `(t, t + d)`, `t = 0..=T - d`.
    pub errors: Vec<T>,
    /// Decision statistic: the calibrated percentile of `errors`.
    pub statistic: T,
    pub mae_xyz: T,
    pub mae_rpy: T,
    pub pass: bool,
}

/// Errors and per-channel mean absolute errors for one rollout.
pub fn idm_errors<T: Scalar, P: StatePredictor<T> + ?Sized>(
    rollout: &Rollout<T>,
    predictor: &P,
    d: usize,
    radian_weight: f64,
) -> Result<(Vec<T>, T, T), IdmError> {
    if let Some(want) = predictor.interval() {
        if want != d {
            return Err(IdmError::Interval { got: d, want });
        }
    }
    let frames = rollout.states.len();
    if d == 0 || frames <= d {
        return Err(IdmError::TooShort {
            id: rollout.id.clone(),
            d,
        });
    }
    let w = T::lit(radian_weight);
    let mut errors = Vec::with_capacity(frames - d);
    let (mut abs_xyz, mut abs_rpy) = (T::zero(), T::zero());
    for t in 0..frames - d {
        let truth = state_diff(rollout, t, d)?;
        let pred = predictor.predict(rollout, t, d)?;
        let diff = pose_diff(&truth, &pred);
        let mut sq = T::zero();
        for k in 0..6 {
            let scaled = if k < 3 { diff[k] } else { diff[k] * w };
            sq = sq + scaled * scaled;
            if k < 3 {
                abs_xyz = abs_xyz + diff[k].abs();
            } else {
                abs_rpy = abs_rpy + diff[k].abs();
            }
        }
        errors.push(sq.sqrt());
    }
    let denom = T::from_usize_lossy(3 * errors.len());
    Ok((errors, abs_xyz / denom, abs_rpy / denom))
}

pub fn verify_idm<T: Scalar, P: StatePredictor<T> + ?Sized>(
    rollout: &Rollout<T>,
    predictor: &P,
    calib: &IdmCalibration,
) -> Result<IdmResult<T>, IdmError> {
    let (errors, mae_xyz, mae_rpy) = idm_errors(rollout, predictor, calib.d, calib.radian_weight)?;
    let statistic = quantile(&errors, calib.percentile).map_err(|e| IdmError::Unavailable(e.to_string()))?;
    Ok(IdmResult {
        pass: statistic.as_f64() <= calib.tau,
        errors,
        statistic,
        mae_xyz,
        mae_rpy,
    })
}

/// Sets `tau` from success rollouts. Under [`Pooling::Samples`] every `e` is pooled;
/// under [`Pooling::PerRollout`] each rollout contributes its own decision statistic.
pub fn calibrate_idm<T: Scalar, P: StatePredictor<T> + ?Sized>(
    success: &[Rollout<T>],
    predictor: &P,
    cfg: &IdmConfig,
) -> Result<IdmCalibration, IdmError> {
    if success.is_empty() {
        return Err(IdmError::Empty);
    }
    let mut pooled = Vec::new();
    let (mut mae_xyz, mut mae_rpy) = (0.0, 0.0);
    for r in success {
        let (e, mx, mr) = idm_errors(r, predictor, cfg.d, cfg.radian_weight)?;
        mae_xyz += mx.as_f64();
        mae_rpy += mr.as_f64();
        match cfg.pooling {
            Pooling::Samples => pooled.extend(e.iter().map(|v| v.as_f64())),
            Pooling::PerRollout => pooled.push(
                quantile(&e, cfg.percentile)
                    .map_err(|e| IdmError::Unavailable(e.to_string()))?
                    .as_f64(),
            ),
        }
    }
    let p = quantile(&pooled, cfg.percentile).map_err(|e| IdmError::Unavailable(e.to_string()))?;
    let n = success.len() as f64;
    Ok(IdmCalibration {
        tau: p.max(cfg.tau_floor),
        d: cfg.d,
        percentile: cfg.percentile,
        radian_weight: cfg.radian_weight,
        pooling: cfg.pooling,
        mae_xyz: mae_xyz / n,
        mae_rpy: mae_rpy / n,
        rollouts: success.len(),
    })
}
