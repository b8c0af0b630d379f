//! Semantic judge: is the candidate a genuine failure of the task, and is it free of
//! severe visual artifacts? Answered by a remote judge or by the ground-truth mock.

use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::model::Outcome;
use crate::transport::{call_typed, JsonTransport, RetryPolicy, TransportError};
use crate::world::ArtifactSpec;
use crate::Rollout;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticRequest {
    pub instruction: String,
    pub reference_clip_ref: String,
    pub candidate_clip_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticResponse {
    pub valid_failure: bool,
    pub visual_ok: bool,
    pub rationale: String,
}

pub trait SemanticClient: Send + Sync {
    fn judge(&self, request: &SemanticRequest) -> Result<SemanticResponse, TransportError>;
}

/// Remote judge behind any JSON transport.
pub struct RemoteSemantic<T> {
    pub transport: T,
}

impl<T: JsonTransport> SemanticClient for RemoteSemantic<T> {
    fn judge(&self, request: &SemanticRequest) -> Result<SemanticResponse, TransportError> {
        call_typed(&self.transport, request)
    }
}

/// Artifact magnitudes at or above which the mock reports a visual defect.
/// Joint spikes and lag are not visible in the clip and have no floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualFloors {
    pub jitter_px: f64,
    pub flicker_rate: f64,
    pub topo_warp: f64,
    pub affine_jitter: f64,
}

impl Default for VisualFloors {
    fn default() -> Self {
        Self {
            jitter_px: 2.0,
            flicker_rate: 0.2,
            topo_warp: 0.3,
            affine_jitter: 0.05,
        }
    }
}

impl VisualFloors {
    pub fn visual_ok(&self, a: &ArtifactSpec) -> bool {
        a.jitter_px < self.jitter_px
            && a.flicker_rate < self.flicker_rate
            && a.topo_warp < self.topo_warp
            && a.affine_jitter < self.affine_jitter
    }
}

/// Answers from a registry of clip id -> (simulated outcome, injected artifacts).
#[derive(Debug, Default)]
pub struct MockSemantic {
    registry: RwLock<BTreeMap<String, (Outcome, ArtifactSpec)>>,
    pub floors: VisualFloors,
}

impl MockSemantic {
    pub fn new(floors: VisualFloors) -> Self {
        Self {
            registry: RwLock::default(),
            floors,
        }
    }

    pub fn register(&self, clip_ref: impl Into<String>, outcome: Outcome, artifacts: ArtifactSpec) {
        self.registry
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(clip_ref.into(), (outcome, artifacts));
    }

    pub fn answer(&self, request: &SemanticRequest) -> Result<SemanticResponse, TransportError> {
        let reg = self.registry.read().unwrap_or_else(|p| p.into_inner());
        let (outcome, artifacts) = reg
            .get(&request.candidate_clip_ref)
            .ok_or_else(|| TransportError::Protocol(format!("unknown clip {}", request.candidate_clip_ref)))?;
        let valid_failure = *outcome == Outcome::Fail;
        let visual_ok = self.floors.visual_ok(artifacts);
        let rationale = match (valid_failure, visual_ok) {
            (true, true) => "task not completed; clip is clean",
            (true, false) => "task not completed; clip shows visual artifacts",
            (false, true) => "task completed; not a failure",
            (false, false) => "task completed and clip shows visual artifacts",
        };
        Ok(SemanticResponse {
            valid_failure,
            visual_ok,
            rationale: rationale.to_string(),
        })
    }
}

impl SemanticClient for MockSemantic {
    fn judge(&self, request: &SemanticRequest) -> Result<SemanticResponse, TransportError> {
        self.answer(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticVerdict {
    pub valid_failure: bool,
    pub visual_ok: bool,
    pub rationale: String,
}

/// A candidate whose judge could not be reached. It is neither retained nor counted
/// as rejected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("rollout {id} quarantined: {reason}")]
pub struct Quarantined {
    pub id: String,
    pub reason: TransportError,
}

pub fn verify_semantic(
    candidate: &Rollout,
    reference_id: &str,
    client: &dyn SemanticClient,
    retry: &RetryPolicy,
) -> Result<SemanticVerdict, Quarantined> {
    let request = SemanticRequest {
        instruction: candidate.task.clone(),
        reference_clip_ref: reference_id.to_string(),
        candidate_clip_ref: candidate.id.clone(),
    };
    let resp = retry
        .run(|| client.judge(&request))
        .map_err(|reason| Quarantined {
            id: candidate.id.clone(),
            reason,
        })?;
    Ok(SemanticVerdict {
        valid_failure: resp.valid_failure,
        visual_ok: resp.visual_ok,
        rationale: resp.rationale,
    })
}
