mod common;

use common::{any_label, fail_label, translation_label};
use failsynth::eval::{
    correction_acc, cosine_sim, rouge_l, AccConfig, EvalError, Evaluator, MockJudge, Prediction, TokenFrequency,
};
use failsynth::label::{parse, AxisDir, FixLabel};
use failsynth::transport::RetryPolicy;
use proptest::prelude::*;

const TABLE_I: &str = "RESULT=FAIL; TYPE=translation; STAGE=pre_grasp; FIX_DIR_X=-x; FIX_N_X=2; FIX_DIR_Y=+y; FIX_N_Y=3; The execution failed due to a translation misalignment before grasping. To fix it, nudge the end-effector in -x for 2 steps and in +y for 3 steps in the keyframe.";

fn evaluator<'a>(judge: &'a MockJudge, embedder: &'a TokenFrequency) -> Evaluator<'a> {
    Evaluator {
        acc: AccConfig::default(),
        judge,
        embedder,
        embedder_name: "token_frequency".into(),
        retry: RetryPolicy::default(),
    }
}

fn swap_axes(l: &FixLabel) -> FixLabel {
    let flip = |d: Option<AxisDir>| {
        d.map(|d| match d {
            AxisDir::PlusX => AxisDir::PlusY,
            AxisDir::MinusX => AxisDir::MinusY,
            AxisDir::PlusY => AxisDir::PlusX,
            AxisDir::MinusY => AxisDir::MinusX,
        })
    };
    FixLabel {
        fix_dir_x: flip(l.fix_dir_y),
        fix_n_x: l.fix_n_y,
        fix_dir_y: flip(l.fix_dir_x),
        fix_n_y: l.fix_n_x,
        ..l.clone()
    }
}

proptest! {
    #[test]
    fn text_metrics_are_bounded(a in ".{0,80}", b in ".{0,80}") {
        let r = rouge_l(&a, &b);
        let c = cosine_sim(&a, &b, &TokenFrequency).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        prop_assert_eq!(rouge_l(&a, &a), 1.0);
        prop_assert_eq!(cosine_sim(&a, &a, &TokenFrequency).unwrap(), 1.0);
    }

    #[test]
    fn acc_is_bounded_and_one_on_identity(gt in fail_label(), pred in any_label()) {
        let cfg = AccConfig::default();
        let v = correction_acc(&gt, &pred, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(correction_acc(&gt, &gt, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn acc_ignores_axis_roles(gt in translation_label(), pred in translation_label()) {
        let cfg = AccConfig::default();
        let a = correction_acc(&gt, &pred, &cfg).unwrap();
        let b = correction_acc(&swap_axes(&gt), &swap_axes(&pred), &cfg).unwrap();
        prop_assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn larger_bin_errors_never_score_higher(gt in translation_label(), e1 in 0u32..8, e2 in 0u32..8) {
        let (lo, hi) = (e1.min(e2), e1.max(e2));
        let cfg = AccConfig::default();
        let off = |e: u32| FixLabel { fix_n_x: gt.fix_n_x.map(|n| n + e), ..gt.clone() };
        prop_assert!(correction_acc(&gt, &off(hi), &cfg).unwrap() <= correction_acc(&gt, &off(lo), &cfg).unwrap());
    }

    #[test]
    fn perfect_predictions_score_one(labels in prop::collection::vec(any_label(), 1..20)) {
        let (judge, emb) = (MockJudge, TokenFrequency);
        let gt: Vec<(String, FixLabel)> = labels.iter().enumerate().map(|(i, l)| (format!("r{i}"), l.clone())).collect();
        let preds: Vec<Prediction> = gt.iter().map(|(id, l)| Prediction { id: id.clone(), pred_text: l.serialize() }).collect();
        let (s, _) = evaluator(&judge, &emb).evaluate(&gt, &preds).unwrap();
        prop_assert_eq!((s.rouge_l, s.cosine, s.bin_succ, s.fuzzy), (1.0, 1.0, 1.0, 1.0));
        prop_assert!(s.acc.is_none_or(|a| a == 1.0));
    }
}

#[test]
fn three_record_fixture_means() {
    let table = parse(TABLE_I).unwrap();
    let wide = FixLabel { fix_n_x: Some(4), ..table.clone() };
    let grip = parse("RESULT=FAIL; TYPE=weak_close; STAGE=grasp; CLOSE_AT=40; STRENGTH=0.90; x").unwrap();
    let late = FixLabel {
        gripper_fix: Some(failsynth::label::GripperFix { close_at: 45, strength: 0.9 }),
        ..grip.clone()
    };
    let gt = vec![("a".to_string(), table.clone()), ("b".to_string(), table.clone()), ("c".to_string(), grip)];
    let preds = vec![
        Prediction { id: "a".into(), pred_text: table.serialize() },
        Prediction { id: "b".into(), pred_text: wide.serialize() },
        Prediction { id: "c".into(), pred_text: late.serialize() },
    ];
    let (judge, emb) = (MockJudge, TokenFrequency);
    let (s, records) = evaluator(&judge, &emb).evaluate(&gt, &preds).unwrap();
    let accs: Vec<f64> = records.iter().map(|r| r.acc.unwrap()).collect();
    assert!((accs[1] - (3.0 + 1.0 / 3.0) / 4.0).abs() < 1e-12);
    assert!((accs[2] - 2.0 / 3.0).abs() < 1e-12);
    assert!((s.acc.unwrap() - (1.0 + (3.0 + 1.0 / 3.0) / 4.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
    assert!((s.fuzzy - (1.0 + 0.5 + 0.5) / 3.0).abs() < 1e-12);
    assert_eq!(s.bin_succ, 1.0);
}

#[test]
fn empty_missing_and_duplicate_inputs_are_errors() {
    let (judge, emb) = (MockJudge, TokenFrequency);
    let ev = evaluator(&judge, &emb);
    assert!(matches!(ev.evaluate(&[], &[]), Err(EvalError::Empty)));
    let gt = vec![("a".to_string(), parse(TABLE_I).unwrap())];
    assert!(matches!(ev.evaluate(&gt, &[]), Err(EvalError::MissingPredictions(ids)) if ids == ["a"]));
    let p = Prediction { id: "a".into(), pred_text: TABLE_I.into() };
    assert!(matches!(ev.evaluate(&gt, &[p.clone(), p]), Err(EvalError::DuplicatePrediction(_))));
}

#[test]
fn unparseable_predictions_score_zero_acc() {
    let (judge, emb) = (MockJudge, TokenFrequency);
    let r = evaluator(&judge, &emb).record("a", &parse(TABLE_I).unwrap(), "RESULT=FAIL; TYPE=slip; x").unwrap();
    assert_eq!(r.acc, Some(0.0));
    assert!(r.parse_error.is_some());
    assert!(r.bin_correct);
}
