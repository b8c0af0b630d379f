#![allow(dead_code)]

use failsynth::label::{AxisDir, FixLabel, GripperFix, LabelResult, Stage};
use failsynth::model::FailureType;
use proptest::prelude::*;

pub fn stage() -> impl Strategy<Value = Stage> {
    prop::sample::select(Stage::ALL.to_vec())
}

pub fn summary() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        "[a-z][a-z0-9 ,.()+;-]{0,40}[a-z.]".prop_map(|s| s),
    ]
}

pub fn translation_label() -> impl Strategy<Value = FixLabel> {
    (stage(), any::<bool>(), 0u32..60, any::<bool>(), 0u32..60, summary()).prop_map(|(stage, px, nx, py, ny, summary)| FixLabel {
        result: LabelResult::Fail,
        failure_type: Some(FailureType::Translation),
        stage: Some(stage),
        fix_dir_x: Some(if px { AxisDir::PlusX } else { AxisDir::MinusX }),
        fix_n_x: Some(nx),
        fix_dir_y: Some(if py { AxisDir::PlusY } else { AxisDir::MinusY }),
        fix_n_y: Some(ny),
        gripper_fix: None,
        summary,
    })
}

pub fn gripper_label() -> impl Strategy<Value = FixLabel> {
    (
        prop::sample::select(vec![FailureType::WeakClose, FailureType::ForceOpen, FailureType::DelayClose]),
        stage(),
        0usize..1000,
        0u32..=100,
        summary(),
    )
        .prop_map(|(ty, stage, close_at, s, summary)| FixLabel {
            result: LabelResult::Fail,
            failure_type: Some(ty),
            stage: Some(stage),
            fix_dir_x: None,
            fix_n_x: None,
            fix_dir_y: None,
            fix_n_y: None,
            gripper_fix: Some(GripperFix {
                close_at,
                strength: s as f64 / 100.0,
            }),
            summary,
        })
}

pub fn fail_label() -> impl Strategy<Value = FixLabel> {
    prop_oneof![translation_label(), gripper_label()]
}

pub fn any_label() -> impl Strategy<Value = FixLabel> {
    prop_oneof![
        1 => summary().prop_map(|summary| FixLabel { summary, ..failsynth::label::success_label() }),
        4 => fail_label(),
    ]
}
