use failsynth::eval::Prediction;
use failsynth::pipeline::{
    load_labeled, manifest_path, read_json, ArtifactPlan, Pipeline, PipelineConfig, StageManifest, VERIFIER_NAMES,
};
use failsynth::world::ArtifactSpec;
use sha2::{Digest, Sha256};

fn pipeline(cfg: PipelineConfig) -> Pipeline {
    Pipeline::new(PipelineConfig { workers: 1, ..cfg }).unwrap()
}

#[test]
fn oracle_composition_recovers_everything() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(PipelineConfig::default());
    let s = p.run_all(12, dir.path()).unwrap();
    assert!(s.manifest.identity_holds());
    assert_eq!(s.candidates, 48);
    assert_eq!(s.recovery.rate, Some(1.0));

    let labeled = load_labeled(&dir.path().join("labeled.jsonl")).unwrap();
    let (_, flipped) = p.recover(&labeled, None, true).unwrap();
    assert_eq!(flipped.report.rate, Some(0.0));

    let preds: Vec<Prediction> = labeled
        .iter()
        .map(|r| Prediction { id: r.rollout.id.clone(), pred_text: r.label.clone() })
        .collect();
    let report = p.evaluate(&labeled, &preds).unwrap();
    let m = &report.summary;
    assert_eq!((m.rouge_l, m.cosine, m.bin_succ, m.fuzzy, m.acc), (1.0, 1.0, 1.0, 1.0, Some(1.0)));
}

#[test]
fn every_output_carries_the_config_hash_and_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(PipelineConfig::default());
    p.run_all(6, dir.path()).unwrap();
    for name in ["demos", "candidates", "retained", "reports", "labeled", "recovery"] {
        let data = dir.path().join(format!("{name}.jsonl"));
        let m: StageManifest = read_json(&manifest_path(&data)).unwrap();
        assert_eq!(m.config_hash, p.config_hash(), "{name}");
        assert_eq!(m.data_sha256, hex_digest(&std::fs::read(&data).unwrap()), "{name}");
        assert_eq!(m.records, std::fs::read_to_string(&data).unwrap().lines().count(), "{name}");
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn rerunning_into_the_same_directory_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let p = pipeline(PipelineConfig::default());
    p.run_all(5, dir.path()).unwrap();
    let first: Vec<_> = ["retained.jsonl", "retained.manifest.json", "recovery.jsonl"]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    p.run_all(5, dir.path()).unwrap();
    for (f, bytes) in ["retained.jsonl", "retained.manifest.json", "recovery.jsonl"].iter().zip(first) {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn injected_artifacts_are_rejected_and_counted() {
    let cfg = PipelineConfig {
        artifacts: ArtifactPlan {
            spec: ArtifactSpec { jitter_px: 4.0, ..Default::default() },
            fraction: 0.5,
        },
        ..PipelineConfig::default()
    };
    let p = pipeline(cfg);
    let demos = p.generate(10).unwrap();
    let (cands, summary) = p.perturb(&demos, &p.config().failure_types).unwrap();
    let calib = p.calibrate(&demos).unwrap();
    let v = p.verify(&cands, &demos, &calib).unwrap();
    assert!(summary.artifact_injected > 0 && summary.artifact_injected < cands.len());
    assert_eq!(v.manifest.rejected, summary.artifact_injected);
    assert_eq!(v.manifest.rejections["semantic_visual"], summary.artifact_injected);
    assert_eq!(v.manifest.rejections["tracks"], summary.artifact_injected);
    for name in VERIFIER_NAMES.iter().filter(|n| !["semantic_visual", "tracks"].contains(n)) {
        assert_eq!(v.manifest.rejections[*name], 0, "{name}");
    }
    assert!(v.retained.iter().all(|r| p.artifacts_for(&r.id).is_clean()));
}

#[test]
fn config_errors() {
    assert!(PipelineConfig::from_toml("seed = 1\nbogus = 2\n").is_err());
    assert!(PipelineConfig::from_toml("seed = \"one\"\n").is_err());
    let mut cfg = PipelineConfig::default();
    cfg.recovery.bin_size = 0.02;
    assert!(Pipeline::new(cfg).is_err());
    let cfg = PipelineConfig::from_toml("seed = 9\n[tracks]\npass_floor = 0.5\n").unwrap();
    assert_eq!((cfg.seed, cfg.tracks.pass_floor, cfg.horizon), (9, 0.5, 60));
    assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn calibration_rejects_failures() {
    let p = pipeline(PipelineConfig::default());
    let demos = p.generate(3).unwrap();
    let (cands, _) = p.perturb(&demos, &p.config().failure_types).unwrap();
    assert!(p.calibrate(&cands).is_err());
}
