use failsynth::model::{FailureType, Outcome};
use failsynth::perturb::PerturbationSpec;
use failsynth::verify::joints::{FRANKA_Q_MAX, FRANKA_Q_MIN};
use failsynth::world::{resimulate, script_success, simulate, synthesize_observations, ArtifactSpec, SceneDistribution, SceneSpec};
use proptest::prelude::*;

fn translation_spec(keyframe: usize, ox: f64, oy: f64) -> PerturbationSpec {
    PerturbationSpec {
        failure_type: FailureType::Translation,
        keyframe,
        window: Some(5),
        delay_steps: None,
        strength_scale: None,
        invert: None,
        offset_x: Some(ox),
        offset_y: Some(oy),
        sigma: None,
        seed: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resimulation_is_deterministic(seed in any::<u64>()) {
        let scene = SceneDistribution::default().sample(seed);
        let demo = script_success(&scene, 60).unwrap();
        let a = serde_json::to_string(&resimulate(&scene, &demo.actions)).unwrap();
        let b = serde_json::to_string(&resimulate(&scene, &demo.actions)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn demos_succeed_inside_joint_limits(seed in any::<u64>()) {
        let scene = SceneDistribution::default().sample(seed);
        let demo = script_success(&scene, 60).unwrap();
        prop_assert_eq!(demo.outcome, Some(Outcome::Success));
        let obs = synthesize_observations(&demo, &scene, &ArtifactSpec::default()).unwrap();
        prop_assert!(obs.validate().is_ok());
        for row in &obs.joints.q {
            for j in 0..row.len() {
                prop_assert!(row[j] > FRANKA_Q_MIN[j] && row[j] < FRANKA_Q_MAX[j]);
            }
        }
    }

    /// Shrinking a failing offset towards zero flips the outcome to success at a
    /// magnitude no larger than the grasp tolerance.
    #[test]
    fn success_boundary_lies_within_tolerance(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::TAU) {
        let scene = SceneDistribution::default().sample(seed);
        let demo = script_success(&scene, 60).unwrap();
        let keyframe = failsynth::perturb::closing_keyframe(&demo.actions).unwrap();
        let outcome = |r: f64| {
            let spec = translation_spec(keyframe, r * angle.cos(), r * angle.sin());
            simulate(&scene, &spec.apply(&demo.actions).unwrap()).outcome
        };
        let (mut ok, mut bad) = (0.0, 4.0 * scene.grasp_tolerance);
        prop_assert_eq!(outcome(ok), Outcome::Success);
        prop_assert_eq!(outcome(bad), Outcome::Fail);
        for _ in 0..40 {
            let mid = 0.5 * (ok + bad);
            if outcome(mid) == Outcome::Success { ok = mid } else { bad = mid }
        }
        prop_assert!(ok <= scene.grasp_tolerance + 1e-9, "boundary at {ok}");
    }
}

#[test]
fn invalid_scenes_are_rejected() {
    let mut s = SceneSpec::default();
    s.grasp_tolerance = 0.0;
    assert!(script_success(&s, 60).is_err());
    let mut s = SceneSpec::default();
    s.object_pos = [2.0, 0.0, 0.02];
    assert!(script_success(&s, 60).is_err());
    assert!(script_success(&SceneSpec::default(), 3).is_err());
}
