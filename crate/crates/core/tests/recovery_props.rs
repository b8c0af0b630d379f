mod common;

use common::fail_label;
use failsynth::label::{generate_label, LabelConfig};
use failsynth::model::{FailureType, Outcome};
use failsynth::perturb::{closing_keyframe, PerturbationSpec};
use failsynth::recovery::{map_to_primitives, recover_case, replay_with_recovery, RecoveryCase, RecoveryConfig};
use failsynth::world::{script_success, simulate, SceneSpec};
use proptest::prelude::*;

fn shifted(ox: f64, oy: f64) -> (SceneSpec, Vec<failsynth::Action>, PerturbationSpec) {
    let scene = SceneSpec::default();
    let demo = script_success(&scene, 60).unwrap();
    let spec = PerturbationSpec {
        failure_type: FailureType::Translation,
        keyframe: closing_keyframe(&demo.actions).unwrap(),
        window: Some(5),
        delay_steps: None,
        strength_scale: None,
        invert: None,
        offset_x: Some(ox),
        offset_y: Some(oy),
        sigma: None,
        seed: 0,
    };
    let actions = spec.apply(&demo.actions).unwrap();
    (scene, actions, spec)
}

proptest! {
    #[test]
    fn mapping_is_deterministic_and_total(l in fail_label(), k in 5usize..50) {
        let cfg = RecoveryConfig::default();
        let nonzero = l.failure_type != Some(FailureType::Translation) || l.fix_n_x != Some(0) || l.fix_n_y != Some(0);
        let a = map_to_primitives(&l, Some(k), &cfg);
        prop_assert_eq!(a.is_ok(), nonzero);
        prop_assert_eq!(a, map_to_primitives(&l.clone(), Some(k), &cfg));
    }
}

/// Sweeps offsets across bin boundaries. The replayed grasp misses by the binning
/// residual, so recovery must hold whenever that residual is inside the tolerance.
#[test]
fn quantization_sweep() {
    for bin in [0.01, 0.025] {
        let lcfg = LabelConfig { bin_size: bin, ..LabelConfig::default() };
        let rcfg = RecoveryConfig { bin_size: bin, ..RecoveryConfig::default() };
        let (mut inside, mut outside) = (0, 0);
        for i in 0..120 {
            let ox = 0.011 + i as f64 * 0.0005;
            let oy = -0.6 * ox;
            let (scene, failed, spec) = shifted(ox, oy);
            assert_eq!(simulate(&scene, &failed).outcome, Outcome::Fail);
            // offsets below half a bin on both axes have no label
            let Ok(label) = generate_label(&spec, &lcfg) else {
                assert!(ox < bin / 2.0);
                continue;
            };
            let prims = map_to_primitives(&label, Some(spec.keyframe), &rcfg).unwrap();
            let (_, ok) = replay_with_recovery(&scene, &failed, &prims, rcfg.window).unwrap();
            let rx = ox - label.fix_n_x.unwrap() as f64 * bin;
            let ry = oy + label.fix_n_y.unwrap() as f64 * bin;
            let residual = rx.hypot(ry);
            if residual <= scene.grasp_tolerance - 1e-9 {
                assert!(ok, "offset ({ox}, {oy}) residual {residual} not recovered at bin {bin}");
                inside += 1;
            } else if residual > scene.grasp_tolerance + 1e-9 {
                assert!(!ok, "offset ({ox}, {oy}) residual {residual} recovered at bin {bin}");
                outside += 1;
            }
        }
        assert!(inside > 0);
        if bin > 0.02 {
            assert!(outside > 0, "the coarse bin should leave some residuals outside the tolerance");
        }
    }
}

#[test]
fn unusable_labels_leave_the_failure_in_place() {
    let (scene, failed, _) = shifted(0.03, 0.0);
    let case = RecoveryCase { id: "c".into(), scene, failed_actions: failed, label: None };
    let r = recover_case(&case, &RecoveryConfig::default());
    assert!(!r.recovered);
    assert!(r.primitives.is_empty());
    assert!(r.error.is_some());
}
