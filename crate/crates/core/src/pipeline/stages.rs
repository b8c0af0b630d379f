use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_json, write_json, write_stage, PipelineConfig, PipelineError};
use crate::eval::{
    EvalSummary, Evaluator, EvalRecord, MockJudge, Prediction, RemoteEmbedder, RemoteJudge, TokenFrequency,
};
use crate::label::{generate_label, parse, LabelConfig};
use crate::model::{check_unique_ids, read_jsonl, FailureType, Outcome};
use crate::perturb::sample_perturbation;
use crate::recovery::{flip_label, recover_case, recovery_rate, RecoveryCase, RecoveryReport, RecoveryResult};
use crate::stats::mean;
use crate::transport::{Bounded, TransportConfig};
use crate::verify::idm::{calibrate_idm, verify_idm, IdmCalibration};
use crate::verify::joints::{calibrate_joints, exceedance, JointCalibration, JointConfig};
use crate::verify::semantic::{MockSemantic, Quarantined, RemoteSemantic, SemanticClient};
use crate::verify::tracks::{score_tracks, PointTrackScores};
use crate::verify::{Pooling, VerifierReport, VerifierSuite};
use crate::world::{resimulate, script_success, synthesize_observations, ArtifactSpec, SceneSpec};
use crate::Rollout;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Scene seed of the `i`-th demo under a base seed.
pub fn demo_seed(base: u64, i: usize) -> u64 {
    splitmix64(base.wrapping_add(i as u64))
}

/// Recovers the scene seed from a `demo-<16 hex>[-<type>]` id.
pub fn scene_seed(id: &str) -> Option<u64> {
    let hex = id.strip_prefix("demo-")?.get(..16)?;
    u64::from_str_radix(hex, 16).ok()
}

pub fn candidate_id(demo_id: &str, ty: FailureType) -> String {
    format!("{demo_id}-{ty}")
}

/// Id of the success clip a candidate was derived from.
pub fn reference_id(candidate: &Rollout) -> String {
    match &candidate.spec {
        Some(s) => candidate
            .id
            .strip_suffix(&format!("-{}", s.failure_type))
            .unwrap_or(&candidate.id)
            .to_string(),
        None => candidate.id.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSummary {
    pub inputs: usize,
    pub candidates: usize,
    pub per_type: BTreeMap<String, usize>,
    /// Translation draws discarded by the failure floor.
    pub floor_rejections: usize,
    pub artifact_injected: usize,
    pub excluded: Vec<Excluded>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrations {
    pub config_hash: String,
    pub success_ids: Vec<String>,
    pub idm: IdmCalibration,
    pub joints: JointCalibration,
    /// Sample-pooled thresholds, used only for the exceedance report.
    pub tau_v_samples: f64,
    pub tau_a_samples: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub generated: usize,
    pub retained: usize,
    pub rejected: usize,
    pub quarantined: usize,
}

/// Dataset statistics for one group of rollouts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub rollouts: usize,
    pub s_smooth: Option<f64>,
    pub s_vis: Option<f64>,
    pub s_topo: Option<f64>,
    pub s_global: Option<f64>,
    pub s_pt: Option<f64>,
    pub mae_xyz: Option<f64>,
    pub mae_rpy: Option<f64>,
    pub omega_exceedance: Option<f64>,
    pub alpha_exceedance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config_hash: String,
    pub generated: usize,
    pub retained: usize,
    pub rejected: usize,
    pub quarantined: usize,
    pub retention_rate: Option<f64>,
    pub per_type: BTreeMap<String, TypeCounts>,
    /// Rejected candidates failing each verifier; one candidate may count several times.
    pub rejections: BTreeMap<String, usize>,
    pub calibration_ids: Vec<String>,
    pub tau_v_samples: f64,
    pub tau_a_samples: f64,
    pub ground_truth: DistributionRow,
    pub synthesized: DistributionRow,
}

impl DatasetManifest {
    pub fn identity_holds(&self) -> bool {
        self.retained + self.rejected + self.quarantined == self.generated
            && self
                .per_type
                .values()
                .all(|c| c.retained + c.rejected + c.quarantined == c.generated)
    }
}

pub const VERIFIER_NAMES: [&str; 5] = ["semantic_valid_failure", "semantic_visual", "idm", "joints", "tracks"];

pub struct VerifyOutput {
    pub retained: Vec<Rollout>,
    pub reports: Vec<VerifierReport>,
    pub quarantined: Vec<Quarantined>,
    pub manifest: DatasetManifest,
}

/// A retained rollout with its serialized fix label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRollout {
    #[serde(flatten)]
    pub rollout: Rollout,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReportFile {
    pub config_hash: String,
    pub summary: EvalSummary,
    pub records: Vec<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReportFile {
    pub config_hash: String,
    pub report: RecoveryReport,
    pub per_type: BTreeMap<String, RecoveryReport>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    mean(&values.collect::<Vec<_>>())
}

pub struct Pipeline {
    config: PipelineConfig,
    hash: String,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self {
            hash: config.hash(),
            config,
            pool,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn scene_for(&self, id: &str) -> Result<SceneSpec, PipelineError> {
        scene_seed(id)
            .map(|s| self.config.scenes.sample(s))
            .ok_or_else(|| PipelineError::Validation(format!("cannot recover the scene seed from id {id}")))
    }

    /// Deterministic artifact assignment by candidate id.
    pub fn artifacts_for(&self, id: &str) -> ArtifactSpec {
        let plan = &self.config.artifacts;
        if plan.fraction <= 0.0 {
            return ArtifactSpec::default();
        }
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(id.as_bytes());
        let d = h.finalize();
        let u = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) as f64 / 2f64.powi(64);
        if u < plan.fraction {
            plan.spec
        } else {
            ArtifactSpec::default()
        }
    }

    /// Scripted successes with clean observations, one per scene seed.
    pub fn demos_from_seeds(&self, seeds: &[u64]) -> Result<Vec<Rollout>, PipelineError> {
        let horizon = self.config.horizon;
        self.pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let scene = self.config.scenes.sample(seed);
                    let demo = script_success(&scene, horizon).map_err(|e| PipelineError::Validation(e.to_string()))?;
                    synthesize_observations(&demo, &scene, &ArtifactSpec::default())
                        .map_err(|e| PipelineError::Validation(e.to_string()))
                })
                .collect()
        })
    }

    pub fn generate(&self, n: usize) -> Result<Vec<Rollout>, PipelineError> {
        let seeds: Vec<u64> = (0..n).map(|i| demo_seed(self.config.seed, i)).collect();
        self.demos_from_seeds(&seeds)
    }

    /// One candidate per (demo, failure type) in input order.
    pub fn perturb(&self, demos: &[Rollout], types: &[FailureType]) -> Result<(Vec<Rollout>, PerturbSummary), PipelineError> {
        check_unique_ids(demos.iter().map(|d| d.id.as_str()))?;
        let jobs: Vec<(&Rollout, usize, FailureType)> = demos
            .iter()
            .flat_map(|d| types.iter().enumerate().map(move |(k, &t)| (d, k, t)))
            .collect();
        let results: Vec<Result<(Rollout, usize), Excluded>> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(demo, _, ty)| -> Result<Result<(Rollout, usize), Excluded>, PipelineError> {
                    let scene = self.scene_for(&demo.id)?;
                    let id = candidate_id(&demo.id, ty);
                    let type_index = FailureType::ALL.iter().position(|t| *t == ty).expect("known type") as u64;
                    let seed = splitmix64(scene.seed ^ (type_index + 1).wrapping_mul(GOLDEN));
                    let inj = match sample_perturbation(&demo.actions, ty, &self.config.perturb, scene.grasp_tolerance, seed) {
                        Ok(inj) => inj,
                        Err(e) => {
                            return Ok(Err(Excluded {
                                id,
                                reason: e.to_string(),
                            }))
                        }
                    };
                    let mut r = resimulate(&scene, &inj.actions);
                    r.id = id;
                    r.task = demo.task.clone();
                    r.spec = Some(inj.spec);
                    let r = synthesize_observations(&r, &scene, &self.artifacts_for(&r.id))
                        .map_err(|e| PipelineError::Validation(e.to_string()))?;
                    Ok(Ok((r, inj.rejected_draws)))
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        let mut summary = PerturbSummary {
            inputs: demos.len(),
            candidates: 0,
            per_type: types.iter().map(|t| (t.to_string(), 0)).collect(),
            floor_rejections: 0,
            artifact_injected: 0,
            excluded: Vec::new(),
        };
        let mut out = Vec::new();
        for r in results {
            match r {
                Ok((r, rejected)) => {
                    for k in 0..rejected {
                        log::info!("{}: translation draw {} below the failure floor, resampled", r.id, k + 1);
                    }
                    summary.floor_rejections += rejected;
                    let ty = r.spec.as_ref().expect("spec set").failure_type.to_string();
                    *summary.per_type.entry(ty).or_default() += 1;
                    if !self.artifacts_for(&r.id).is_clean() {
                        summary.artifact_injected += 1;
                    }
                    out.push(r);
                }
                Err(x) => {
                    log::warn!("{}: excluded: {}", x.id, x.reason);
                    summary.excluded.push(x);
                }
            }
        }
        summary.candidates = out.len();
        Ok((out, summary))
    }

    pub fn calibrate(&self, success: &[Rollout]) -> Result<Calibrations, PipelineError> {
        if let Some(r) = success.iter().find(|r| r.outcome != Some(Outcome::Success)) {
            return Err(PipelineError::Validation(format!("calibration rollout {} is not a success", r.id)));
        }
        let predictor = self.config.predictor.build();
        let v = |e: &dyn std::fmt::Display| PipelineError::Validation(e.to_string());
        let idm = calibrate_idm(success, predictor.as_ref(), &self.config.idm).map_err(|e| v(&e))?;
        let joints = calibrate_joints(success, &self.config.joints).map_err(|e| v(&e))?;
        let samples = calibrate_joints(
            success,
            &JointConfig {
                pooling: Pooling::Samples,
                ..self.config.joints.clone()
            },
        )
        .map_err(|e| v(&e))?;
        Ok(Calibrations {
            config_hash: self.hash.clone(),
            success_ids: success.iter().map(|r| r.id.clone()).collect(),
            idm,
            joints,
            tau_v_samples: samples.tau_v,
            tau_a_samples: samples.tau_a,
        })
    }

    fn semantic_client(&self, candidates: &[Rollout]) -> Result<Box<dyn SemanticClient>, PipelineError> {
        let cfg = &self.config.semantic;
        Ok(match cfg.transport.connect()? {
            None => {
                let mock = MockSemantic::new(cfg.floors.clone());
                for c in candidates {
                    mock.register(c.id.clone(), c.outcome.unwrap_or(Outcome::Fail), self.artifacts_for(&c.id));
                }
                Box::new(mock)
            }
            Some(t) => Box::new(RemoteSemantic {
                transport: Bounded::new(t, cfg.max_in_flight),
            }),
        })
    }

    fn distribution_row(
        &self,
        rollouts: &[&Rollout],
        scores: &[PointTrackScores<f64>],
        maes: &[(f64, f64)],
        calib: &Calibrations,
    ) -> DistributionRow {
        let traces: Vec<_> = rollouts.iter().map(|r| &r.joints).collect();
        let (omega, alpha) = exceedance(&traces, calib.tau_v_samples, calib.tau_a_samples);
        let nonempty = !rollouts.is_empty();
        DistributionRow {
            rollouts: rollouts.len(),
            s_smooth: mean_of(scores.iter().map(|s| s.s_smooth)),
            s_vis: mean_of(scores.iter().map(|s| s.s_vis)),
            s_topo: mean_of(scores.iter().map(|s| s.s_topo)),
            s_global: mean_of(scores.iter().map(|s| s.s_global)),
            s_pt: mean_of(scores.iter().map(|s| s.s_pt)),
            mae_xyz: mean_of(maes.iter().map(|m| m.0)),
            mae_rpy: mean_of(maes.iter().map(|m| m.1)),
            omega_exceedance: nonempty.then_some(omega),
            alpha_exceedance: nonempty.then_some(alpha),
        }
    }

    /// Runs the four verifiers on every candidate and applies the gate.
    pub fn verify(&self, candidates: &[Rollout], references: &[Rollout], calib: &Calibrations) -> Result<VerifyOutput, PipelineError> {
        check_unique_ids(candidates.iter().map(|c| c.id.as_str()))?;
        for c in candidates {
            c.validate()?;
        }
        calib
            .joints
            .validate()
            .map_err(|e| PipelineError::Validation(e.to_string()))?;
        let predictor = self.config.predictor.build();
        let semantic = self.semantic_client(candidates)?;
        let suite = VerifierSuite {
            tracks: self.config.tracks.clone(),
            idm: calib.idm.clone(),
            joints: calib.joints.clone(),
            predictor: predictor.as_ref(),
            semantic: semantic.as_ref(),
            retry: self.config.semantic.retry.clone(),
        };
        let outcomes: Vec<Result<VerifierReport, Quarantined>> = self.pool.install(|| {
            candidates
                .par_iter()
                .map(|c| suite.verify(c, &reference_id(c)))
                .collect()
        });
        let gt: Vec<(Option<PointTrackScores<f64>>, Option<(f64, f64)>)> = self.pool.install(|| {
            references
                .par_iter()
                .map(|r| {
                    let s = score_tracks(&r.tracks, &self.config.tracks).ok();
                    let m = verify_idm(r, predictor.as_ref(), &calib.idm).ok().map(|x| (x.mae_xyz, x.mae_rpy));
                    (s, m)
                })
                .collect()
        });

        let mut per_type: BTreeMap<String, TypeCounts> = BTreeMap::new();
        let mut rejections: BTreeMap<String, usize> = VERIFIER_NAMES.iter().map(|n| (n.to_string(), 0)).collect();
        let (mut retained, mut reports, mut quarantined) = (Vec::new(), Vec::new(), Vec::new());
        for (c, o) in candidates.iter().zip(outcomes) {
            let ty = c.spec.as_ref().map_or("none".to_string(), |s| s.failure_type.to_string());
            let counts = per_type.entry(ty).or_default();
            counts.generated += 1;
            match o {
                Ok(rep) => {
                    if rep.retained {
                        counts.retained += 1;
                        retained.push(c.clone());
                    } else {
                        counts.rejected += 1;
                        for (name, pass) in VERIFIER_NAMES.iter().zip(rep.pass_bits()) {
                            if !pass {
                                *rejections.get_mut(*name).expect("known verifier") += 1;
                            }
                        }
                    }
                    reports.push(rep);
                }
                Err(q) => {
                    log::warn!("{q}");
                    counts.quarantined += 1;
                    quarantined.push(q);
                }
            }
        }
        let kept: BTreeSet<&str> = retained.iter().map(|r| r.id.as_str()).collect();
        let kept_reports: Vec<&VerifierReport> = reports.iter().filter(|r| kept.contains(r.id.as_str())).collect();
        let synthesized = self.distribution_row(
            &retained.iter().collect::<Vec<_>>(),
            &kept_reports.iter().filter_map(|r| r.track_scores).collect::<Vec<_>>(),
            &kept_reports
                .iter()
                .filter_map(|r| r.idm_mae_xyz.zip(r.idm_mae_rpy))
                .collect::<Vec<_>>(),
            calib,
        );
        let ground_truth = self.distribution_row(
            &references.iter().collect::<Vec<_>>(),
            &gt.iter().filter_map(|g| g.0).collect::<Vec<_>>(),
            &gt.iter().filter_map(|g| g.1).collect::<Vec<_>>(),
            calib,
        );
        let generated = candidates.len();
        let manifest = DatasetManifest {
            config_hash: self.hash.clone(),
            generated,
            retained: retained.len(),
            rejected: reports.len() - retained.len(),
            quarantined: quarantined.len(),
            retention_rate: (generated > 0).then(|| retained.len() as f64 / generated as f64),
            per_type,
            rejections,
            calibration_ids: calib.success_ids.clone(),
            tau_v_samples: calib.tau_v_samples,
            tau_a_samples: calib.tau_a_samples,
            ground_truth,
            synthesized,
        };
        if !manifest.identity_holds() {
            return Err(PipelineError::Validation("manifest counts do not add up".into()));
        }
        Ok(VerifyOutput {
            retained,
            reports,
            quarantined,
            manifest,
        })
    }

    pub fn label(&self, retained: &[Rollout]) -> Result<Vec<LabeledRollout>, PipelineError> {
        let cfg = LabelConfig {
            attach_strength: self.config.scenes.attach_strength,
            ..self.config.label.clone()
        };
        self.pool.install(|| {
            retained
                .par_iter()
                .map(|r| {
                    let spec = r
                        .spec
                        .as_ref()
                        .ok_or_else(|| PipelineError::Validation(format!("rollout {} carries no perturbation spec", r.id)))?;
                    let label = generate_label(spec, &cfg)?;
                    let text = label.serialize();
                    if parse(&text)? != label {
                        return Err(PipelineError::Validation(format!("label of {} does not round-trip", r.id)));
                    }
                    Ok(LabeledRollout {
                        rollout: r.clone(),
                        label: text,
                    })
                })
                .collect()
        })
    }

    /// Replays each failure with the correction from its prediction, or from its own
    /// label when no predictions are given. `flip` reverses every correction.
    pub fn recover(
        &self,
        labeled: &[LabeledRollout],
        predictions: Option<&[Prediction]>,
        flip: bool,
    ) -> Result<(Vec<RecoveryResult>, RecoveryReportFile), PipelineError> {
        let by_id: Option<BTreeMap<&str, &str>> =
            predictions.map(|p| p.iter().map(|p| (p.id.as_str(), p.pred_text.as_str())).collect());
        if let Some(m) = &by_id {
            let missing: Vec<String> = labeled
                .iter()
                .filter(|r| !m.contains_key(r.rollout.id.as_str()))
                .map(|r| r.rollout.id.clone())
                .collect();
            if !missing.is_empty() {
                return Err(crate::eval::EvalError::MissingPredictions(missing).into());
            }
        }
        let cfg = &self.config.recovery;
        let results: Vec<RecoveryResult> = self.pool.install(|| {
            labeled
                .par_iter()
                .map(|r| {
                    let text = by_id.as_ref().map_or(r.label.as_str(), |m| m[r.rollout.id.as_str()]);
                    let label = match parse(text) {
                        Ok(l) => Some(if flip { flip_label(&l) } else { l }),
                        Err(e) => {
                            log::warn!("{}: unusable prediction: {e}", r.rollout.id);
                            None
                        }
                    };
                    let case = RecoveryCase {
                        id: r.rollout.id.clone(),
                        scene: self.scene_for(&r.rollout.id)?,
                        failed_actions: r.rollout.actions.clone(),
                        label,
                    };
                    Ok(recover_case(&case, cfg))
                })
                .collect::<Result<_, PipelineError>>()
        })?;
        let mut groups: BTreeMap<String, Vec<RecoveryResult>> = BTreeMap::new();
        for (r, res) in labeled.iter().zip(&results) {
            let ty = r.rollout.spec.as_ref().map_or("none".to_string(), |s| s.failure_type.to_string());
            groups.entry(ty).or_default().push(res.clone());
        }
        let report = RecoveryReportFile {
            config_hash: self.hash.clone(),
            report: recovery_rate(&results),
            per_type: groups.iter().map(|(k, v)| (k.clone(), recovery_rate(v))).collect(),
        };
        Ok((results, report))
    }

    pub fn evaluate(&self, labeled: &[LabeledRollout], predictions: &[Prediction]) -> Result<EvalReportFile, PipelineError> {
        let gt = labeled
            .iter()
            .map(|r| Ok((r.rollout.id.clone(), parse(&r.label)?)))
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let cfg = &self.config.eval;
        let judge: Box<dyn crate::eval::FuzzyJudge> = match cfg.judge.connect()? {
            None => Box::new(MockJudge),
            Some(t) => Box::new(RemoteJudge {
                transport: Bounded::new(t, cfg.max_in_flight),
            }),
        };
        let (embedder, name): (Box<dyn crate::eval::Embedder>, &str) = match cfg.embedder.connect()? {
            None => (Box::new(TokenFrequency), "token_frequency"),
            Some(t) => (
                Box::new(RemoteEmbedder {
                    transport: Bounded::new(t, cfg.max_in_flight),
                }),
                "remote",
            ),
        };
        let evaluator = Evaluator {
            acc: cfg.acc.clone(),
            judge: judge.as_ref(),
            embedder: embedder.as_ref(),
            embedder_name: name.to_string(),
            retry: cfg.retry.clone(),
        };
        let (summary, records) = self.pool.install(|| evaluator.evaluate(&gt, predictions))?;
        Ok(EvalReportFile {
            config_hash: self.hash.clone(),
            summary,
            records,
        })
    }

    /// generate -> perturb -> calibrate -> verify -> label -> recover, writing every
    /// artifact into `dir`. Calibration uses the generated demos.
    pub fn run_all(&self, n: usize, dir: &Path) -> Result<RunSummary, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let h = self.hash.as_str();
        let demos = self.generate(n)?;
        write_stage(&dir.join("demos.jsonl"), "generate", h, &demos, serde_json::json!({ "n": n }))?;
        let (candidates, ps) = self.perturb(&demos, &self.config.failure_types)?;
        write_stage(&dir.join("candidates.jsonl"), "perturb", h, &candidates, serde_json::to_value(&ps).expect("serializes"))?;
        let calib = self.calibrate(&demos)?;
        write_json(&dir.join("calibration.json"), &calib)?;
        let v = self.verify(&candidates, &demos, &calib)?;
        write_stage(&dir.join("retained.jsonl"), "verify", h, &v.retained, serde_json::to_value(&v.manifest).expect("serializes"))?;
        write_stage(&dir.join("reports.jsonl"), "verify-reports", h, &v.reports, serde_json::Value::Null)?;
        let labeled = self.label(&v.retained)?;
        write_stage(&dir.join("labeled.jsonl"), "label", h, &labeled, serde_json::Value::Null)?;
        let (results, rep) = self.recover(&labeled, None, false)?;
        write_stage(&dir.join("recovery.jsonl"), "recover", h, &results, serde_json::to_value(&rep).expect("serializes"))?;
        Ok(RunSummary {
            demos: demos.len(),
            candidates: candidates.len(),
            manifest: v.manifest,
            labeled: labeled.len(),
            recovery: rep.report,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub demos: usize,
    pub candidates: usize,
    pub manifest: DatasetManifest,
    pub labeled: usize,
    pub recovery: RecoveryReport,
}

pub fn load_rollouts(path: &Path) -> Result<Vec<Rollout>, PipelineError> {
    Ok(read_jsonl(path)?)
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledRollout>, PipelineError> {
    Ok(read_jsonl(path)?)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, PipelineError> {
    Ok(read_jsonl(path)?)
}

pub fn load_calibrations(path: &Path) -> Result<Calibrations, PipelineError> {
    read_json(path)
}

/// Keeps only the transport kinds a `--endpoint` override can replace.
pub fn endpoint_transport(endpoint: &str) -> TransportConfig {
    TransportConfig::Http {
        endpoint: endpoint.to_string(),
        timeout_ms: 30_000,
    }
}
