//! Batch orchestration: configuration, stage functions and on-disk artifacts.
//!
//! Every stage is a pure function of its inputs and the configuration. Records are
//! processed in parallel and collected in input order, so outputs are byte-identical
//! across runs and worker counts.

mod stages;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{AccConfig, EvalError};
use crate::label::{LabelConfig, LabelError};
use crate::model::{FailureType, JsonlError, ModelError};
use crate::perturb::PerturbConfig;
use crate::recovery::RecoveryConfig;
use crate::transport::{RetryPolicy, TransportConfig, TransportError};
use crate::verify::idm::{IdmConfig, JointInversePredictor, Noisy, StateOracle, StatePredictor};
use crate::verify::joints::JointConfig;
use crate::verify::semantic::VisualFloors;
use crate::verify::tracks::TrackConfig;
use crate::world::{ArtifactSpec, SceneDistribution, SURROGATE_VERSION};

pub use stages::*;

/// Coarse error class, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Schema,
    Transport,
    Validation,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed record: {0}")]
    Record(String),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Io { .. } => ErrorKind::Io,
            PipelineError::Config(_) | PipelineError::Record(_) | PipelineError::Label(_) => ErrorKind::Schema,
            PipelineError::Transport(_) => ErrorKind::Transport,
            PipelineError::Validation(_) => ErrorKind::Validation,
            PipelineError::Eval(EvalError::Judge { .. }) => ErrorKind::Transport,
            PipelineError::Eval(_) => ErrorKind::Validation,
        }
    }
}

impl From<JsonlError> for PipelineError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io { path, source } => PipelineError::Io { path, source },
            e @ JsonlError::Parse { .. } => PipelineError::Record(e.to_string()),
        }
    }
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        PipelineError::Validation(e.to_string())
    }
}

/// Which IDM predictor the gate uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorConfig {
    /// Decodes poses from the rendered joint trace.
    #[default]
    JointInverse,
    Oracle,
    NoisyOracle { sigma_xyz: f64, sigma_rpy: f64, seed: u64 },
}

impl PredictorConfig {
    pub fn build(&self) -> Box<dyn StatePredictor<f64>> {
        match self {
            PredictorConfig::JointInverse => Box::new(JointInversePredictor::default()),
            PredictorConfig::Oracle => Box::new(StateOracle),
            PredictorConfig::NoisyOracle {
                sigma_xyz,
                sigma_rpy,
                seed,
            } => Box::new(Noisy {
                inner: StateOracle,
                sigma_xyz: *sigma_xyz,
                sigma_rpy: *sigma_rpy,
                seed: *seed,
            }),
        }
    }
}

/// Artifacts injected into a deterministic fraction of the candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactPlan {
    pub spec: ArtifactSpec,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticConfig {
    pub transport: TransportConfig,
    pub floors: VisualFloors,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            transport: TransportConfig::Mock,
            floors: VisualFloors::default(),
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub acc: AccConfig,
    /// Fuzzy-match judge; the mock compares parsed fields.
    pub judge: TransportConfig,
    /// Embedding service; the mock is the token-frequency embedder.
    pub embedder: TransportConfig,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            acc: AccConfig::default(),
            judge: TransportConfig::Mock,
            embedder: TransportConfig::Mock,
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses one per core. Not part of the config hash.
    pub workers: usize,
    pub horizon: usize,
    pub scenes: SceneDistribution,
    pub perturb: PerturbConfig,
    pub failure_types: Vec<FailureType>,
    pub artifacts: ArtifactPlan,
    pub tracks: TrackConfig,
    pub idm: IdmConfig,
    pub predictor: PredictorConfig,
    pub joints: JointConfig,
    pub semantic: SemanticConfig,
    pub label: LabelConfig,
    pub recovery: RecoveryConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            horizon: 60,
            scenes: SceneDistribution::default(),
            perturb: PerturbConfig::default(),
            failure_types: FailureType::ALL.to_vec(),
            artifacts: ArtifactPlan::default(),
            tracks: TrackConfig::default(),
            idm: IdmConfig::default(),
            predictor: PredictorConfig::default(),
            joints: JointConfig::default(),
            semantic: SemanticConfig::default(),
            label: LabelConfig::default(),
            recovery: RecoveryConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.horizon < 20 {
            return bad(format!("horizon {} below 20", self.horizon));
        }
        if self.failure_types.is_empty() {
            return bad("failure_types is empty".into());
        }
        let w = self.tracks.weights;
        if w.iter().any(|v| *v < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("track weights {w:?} must be non-negative and sum to 1"));
        }
        for (name, p) in [("idm.percentile", self.idm.percentile), ("joints.percentile", self.joints.percentile)] {
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("{name} = {p} outside (0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.artifacts.fraction) || !self.artifacts.spec.is_valid() {
            return bad("artifacts: fraction must lie in [0, 1] and magnitudes be non-negative".into());
        }
        if !(self.label.bin_size > 0.0) || self.label.bin_size != self.recovery.bin_size {
            return bad("label.bin_size must be positive and equal recovery.bin_size".into());
        }
        self.recovery
            .policy
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.perturb.window == 0 || self.perturb.window != self.recovery.window {
            return bad("perturb.window must be positive and equal recovery.window".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `workers`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Written next to every stage output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub surrogate_version: String,
    pub records: usize,
    pub data_sha256: String,
    pub details: serde_json::Value,
}

/// `out.jsonl` -> `out.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Record(format!("{}: {e}", path.display())))
}

/// Writes records as JSON lines plus the stage manifest.
pub fn write_stage<R: Serialize>(
    out: &Path,
    stage: &str,
    config_hash: &str,
    records: &[R],
    details: serde_json::Value,
) -> Result<StageManifest, PipelineError> {
    crate::model::write_jsonl(out, records)?;
    let bytes = std::fs::read(out).map_err(io_err(out))?;
    let manifest = StageManifest {
        stage: stage.to_string(),
        config_hash: config_hash.to_string(),
        surrogate_version: SURROGATE_VERSION.to_string(),
        records: records.len(),
        data_sha256: hex::encode(Sha256::digest(&bytes)),
        details,
    };
    write_json(&manifest_path(out), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_and_validates() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn workers_do_not_change_the_hash() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { workers: 7, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        let c = PipelineConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_schema_errors() {
        let err = PipelineConfig::from_toml("sed = 3").unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Schema);
        let partial = PipelineConfig::from_toml("seed = 9\n[semantic.transport]\nkind = \"http\"\nendpoint = \"http://127.0.0.1:1\"\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert!(matches!(partial.semantic.transport, TransportConfig::Http { timeout_ms: 30_000, .. }));
    }
}
