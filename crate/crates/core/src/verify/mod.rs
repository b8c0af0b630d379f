//! The four verifiers and the all-pass retention gate.

pub mod affine;
pub mod idm;
pub mod joints;
pub mod semantic;
pub mod tracks;

use serde::{Deserialize, Serialize};

use crate::transport::RetryPolicy;
use crate::Rollout;
use idm::{verify_idm, IdmCalibration, StatePredictor};
use joints::{verify_joints, JointCalibration, JointViolation};
use semantic::{verify_semantic, Quarantined, SemanticClient};
use tracks::{score_tracks, PointTrackScores, TrackConfig};

/// How calibration samples are pooled before taking the percentile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Every `(t, j)` or `(t, t + d)` sample of every rollout.
    Samples,
    /// One decision statistic per rollout: the value the verifier compares against
    /// the threshold (max |q̇|, max |q̈|, or the percentile of `e`).
    #[default]
    PerRollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub id: String,
    pub semantic_valid_failure: bool,
    pub semantic_visual_ok: bool,
    pub semantic_rationale: String,
    /// Decision statistic of the IDM verifier; `None` when the predictor failed.
    pub idm_error: Option<f64>,
    pub idm_mae_xyz: Option<f64>,
    pub idm_mae_rpy: Option<f64>,
    pub idm_pass: bool,
    pub joint_pass: bool,
    pub joint_violations: Vec<JointViolation>,
    pub track_scores: Option<PointTrackScores<f64>>,
    /// Set when the clip was discarded for insufficient tracking confidence.
    pub track_error: Option<String>,
    pub track_pass: bool,
    pub retained: bool,
}

impl VerifierReport {
    /// The five pass bits in a fixed order: valid failure, visual, idm, joints, tracks.
    pub fn pass_bits(&self) -> [bool; 5] {
        [
            self.semantic_valid_failure,
            self.semantic_visual_ok,
            self.idm_pass,
            self.joint_pass,
            self.track_pass,
        ]
    }
}

/// Retention decision: every verifier condition holds.
pub fn gate(passes: &[bool]) -> bool {
    passes.iter().all(|&p| p)
}

/// Calibrated verifiers plus the semantic client, applied per candidate.
pub struct VerifierSuite<'a> {
    pub tracks: TrackConfig,
    pub idm: IdmCalibration,
    pub joints: JointCalibration,
    pub predictor: &'a dyn StatePredictor<f64>,
    pub semantic: &'a dyn SemanticClient,
    pub retry: RetryPolicy,
}

impl VerifierSuite<'_> {
    /// `reference_id` names the success clip the candidate was derived from.
    pub fn verify(&self, candidate: &Rollout, reference_id: &str) -> Result<VerifierReport, Quarantined> {
        let sem = verify_semantic(candidate, reference_id, self.semantic, &self.retry)?;
        let idm = verify_idm(candidate, self.predictor, &self.idm);
        if let Err(e) = &idm {
            log::warn!("idm verifier failed on {}: {e}", candidate.id);
        }
        let idm = idm.ok();
        let (joint_violations, joint_pass) = verify_joints(&candidate.joints, &self.joints);
        let joint_pass = joint_pass && !candidate.joints.is_empty();
        let scored = score_tracks(&candidate.tracks, &self.tracks);
        let track_pass = matches!(&scored, Ok(s) if s.s_pt >= self.tracks.pass_floor);
        let (track_scores, track_error) = match scored {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let mut report = VerifierReport {
            id: candidate.id.clone(),
            semantic_valid_failure: sem.valid_failure,
            semantic_visual_ok: sem.visual_ok,
            semantic_rationale: sem.rationale,
            idm_error: idm.as_ref().map(|r| r.statistic),
            idm_mae_xyz: idm.as_ref().map(|r| r.mae_xyz),
            idm_mae_rpy: idm.as_ref().map(|r| r.mae_rpy),
            idm_pass: idm.as_ref().is_some_and(|r| r.pass),
            joint_pass,
            joint_violations,
            track_scores,
            track_error,
            track_pass,
            retained: false,
        };
        report.retained = gate(&report.pass_bits());
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_is_the_conjunction() {
        for mask in 0u32..32 {
            let bits: Vec<bool> = (0..5).map(|k| mask & (1 << k) != 0).collect();
            assert_eq!(gate(&bits), mask == 31);
            let mut rev = bits.clone();
            rev.reverse();
            assert_eq!(gate(&rev), gate(&bits));
        }
    }
}
