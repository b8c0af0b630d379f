use failsynth::model::{FailureType, Outcome};
use failsynth::perturb::{sample_perturbation, PerturbConfig, PerturbationSpec};
use failsynth::world::{script_success, simulate, SceneSpec};
use failsynth::Action;
use proptest::prelude::*;

fn demo_actions() -> (SceneSpec, Vec<Action>) {
    let scene = SceneSpec::default();
    let demo = script_success(&scene, 60).unwrap();
    (scene, demo.actions)
}

fn type_strategy() -> impl Strategy<Value = FailureType> {
    prop::sample::select(FailureType::ALL.to_vec())
}

proptest! {
    #[test]
    fn specs_reproduce_their_actions(ty in type_strategy(), seed in any::<u64>()) {
        let (scene, actions) = demo_actions();
        let inj = sample_perturbation(&actions, ty, &PerturbConfig::default(), scene.grasp_tolerance, seed).unwrap();
        prop_assert_eq!(&inj.spec.apply(&actions).unwrap(), &inj.actions);
        let text = serde_json::to_string(&inj.spec).unwrap();
        let back: PerturbationSpec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &inj.spec);
        prop_assert_eq!(back.apply(&actions).unwrap(), inj.actions);
    }

    #[test]
    fn injectors_touch_only_their_channels(ty in type_strategy(), seed in any::<u64>()) {
        let (scene, actions) = demo_actions();
        let inj = sample_perturbation(&actions, ty, &PerturbConfig::default(), scene.grasp_tolerance, seed).unwrap();
        prop_assert_eq!(inj.actions.len(), actions.len());
        for (a, b) in actions.iter().zip(&inj.actions) {
            prop_assert_eq!((a.dz, a.droll, a.dpitch, a.dyaw), (b.dz, b.droll, b.dpitch, b.dyaw));
            if ty == FailureType::Translation {
                prop_assert_eq!(a.gripper_cmd, b.gripper_cmd);
            } else {
                prop_assert_eq!((a.dx, a.dy), (b.dx, b.dy));
            }
        }
    }
}

#[test]
fn every_type_fails_on_the_default_scene() {
    let (scene, actions) = demo_actions();
    let cfg = PerturbConfig::default();
    for ty in FailureType::ALL {
        for seed in 0..100 {
            let inj = sample_perturbation(&actions, ty, &cfg, scene.grasp_tolerance, seed).unwrap();
            assert_eq!(simulate(&scene, &inj.actions).outcome, Outcome::Fail, "{ty} seed {seed}");
        }
    }
}

#[test]
fn longer_delays_keep_failing() {
    let (scene, actions) = demo_actions();
    let keyframe = failsynth::perturb::closing_keyframe(&actions).unwrap();
    for delay in 4..=10 {
        let (a, _) = failsynth::perturb::inject_delay_close(&actions, keyframe, delay, 0).unwrap();
        assert_eq!(simulate(&scene, &a).outcome, Outcome::Fail, "delay {delay}");
    }
}
