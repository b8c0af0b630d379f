//! Structured fix labels: deterministic generation from a perturbation spec, a
//! canonical serializer and a strict parser.
//!
//! Grammar: `KEY=VALUE` segments joined by `"; "` in the order RESULT, TYPE, STAGE,
//! FIX_DIR_X, FIX_N_X, FIX_DIR_Y, FIX_N_Y, CLOSE_AT, STRENGTH, then `"; "` and a
//! free-text summary. Keys are matched ignoring case and surrounding whitespace;
//! values are exact. The first segment that is not `KEY=VALUE` starts the summary,
//! which runs to the end of the text.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::FailureType;
use crate::perturb::PerturbationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelResult {
    Success,
    Fail,
}

impl LabelResult {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelResult::Success => "SUCCESS",
            LabelResult::Fail => "FAIL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PreGrasp,
    Grasp,
    Transport,
    Place,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::PreGrasp, Stage::Grasp, Stage::Transport, Stage::Place];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PreGrasp => "pre_grasp",
            Stage::Grasp => "grasp",
            Stage::Transport => "transport",
            Stage::Place => "place",
        }
    }
}

/// Signed axis token. `+x`/`-x` are valid only for the x field, `+y`/`-y` for y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisDir {
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "-x")]
    MinusX,
    #[serde(rename = "+y")]
    PlusY,
    #[serde(rename = "-y")]
    MinusY,
}

impl AxisDir {
    pub fn as_str(self) -> &'static str {
        match self {
            AxisDir::PlusX => "+x",
            AxisDir::MinusX => "-x",
            AxisDir::PlusY => "+y",
            AxisDir::MinusY => "-y",
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            AxisDir::PlusX | AxisDir::PlusY => 1.0,
            AxisDir::MinusX | AxisDir::MinusY => -1.0,
        }
    }

    pub fn flipped(self) -> AxisDir {
        match self {
            AxisDir::PlusX => AxisDir::MinusX,
            AxisDir::MinusX => AxisDir::PlusX,
            AxisDir::PlusY => AxisDir::MinusY,
            AxisDir::MinusY => AxisDir::PlusY,
        }
    }

    fn is_x(self) -> bool {
        matches!(self, AxisDir::PlusX | AxisDir::MinusX)
    }

    fn parse(s: &str) -> Option<Self> {
        [AxisDir::PlusX, AxisDir::MinusX, AxisDir::PlusY, AxisDir::MinusY]
            .into_iter()
            .find(|d| d.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperFix {
    pub close_at: usize,
    /// Closing strength in [0, 1], two decimals.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixLabel {
    pub result: LabelResult,
    pub failure_type: Option<FailureType>,
    pub stage: Option<Stage>,
    pub fix_dir_x: Option<AxisDir>,
    pub fix_n_x: Option<u32>,
    pub fix_dir_y: Option<AxisDir>,
    pub fix_n_y: Option<u32>,
    pub gripper_fix: Option<GripperFix>,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Syntax,
    MissingField,
    UnknownKey,
    Domain,
    Numeric,
    Duplicate,
    SchemaViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{class:?} at `{token}`: {message}")]
pub struct LabelError {
    pub class: ErrorClass,
    /// The first offending token, or the missing key.
    pub token: String,
    pub message: String,
}

impl LabelError {
    fn new(class: ErrorClass, token: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            class,
            token: token.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    /// Meters per translation bin.
    pub bin_size: f64,
    /// Scene attach strength used for weak-close corrections.
    pub attach_strength: f64,
    /// Added to the attach strength for weak-close corrections.
    pub strength_margin: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            bin_size: 0.01,
            attach_strength: 0.8,
            strength_margin: 0.1,
        }
    }
}

const KEYS: [&str; 9] = [
    "RESULT",
    "TYPE",
    "STAGE",
    "FIX_DIR_X",
    "FIX_N_X",
    "FIX_DIR_Y",
    "FIX_N_Y",
    "CLOSE_AT",
    "STRENGTH",
];

fn quantize_strength(s: f64) -> f64 {
    (s * 100.0).round() / 100.0
}

fn axis_fix(offset: f64, bin: f64, plus: AxisDir) -> (AxisDir, u32) {
    // the fix moves against the injected offset
    let dir = if offset > 0.0 { plus.flipped() } else { plus };
    (dir, (offset.abs() / bin).round() as u32)
}

fn summary_for(label: &FixLabel) -> String {
    match (label.result, label.failure_type) {
        (LabelResult::Success, _) | (_, None) => "The execution succeeded; no correction is needed.".to_string(),
        (_, Some(FailureType::Translation)) => {
            let mut parts = Vec::new();
            for (d, n) in [(label.fix_dir_x, label.fix_n_x), (label.fix_dir_y, label.fix_n_y)] {
                if let (Some(d), Some(n)) = (d, n) {
                    if n > 0 {
                        parts.push(format!("{n} {} along {}", if n == 1 { "step" } else { "steps" }, d.as_str()));
                    }
                }
            }
            format!(
                "The gripper was misaligned with the object before grasping. Shift the end-effector {} before the keyframe.",
                parts.join(" and ")
            )
        }
        (_, Some(ty)) => {
            let g = label.gripper_fix.expect("gripper label carries a fix");
            let what = match ty {
                FailureType::WeakClose => "closed too weakly and the object slipped",
                FailureType::ForceOpen => "never closed on the object",
                FailureType::DelayClose => "closed too late to catch the object",
                FailureType::Translation => unreachable!(),
            };
            format!(
                "The gripper {what}. Close the gripper at step {} with strength {:.2}.",
                g.close_at, g.strength
            )
        }
    }
}

/// Success label with the fixed template summary.
pub fn success_label() -> FixLabel {
    let mut l = FixLabel {
        result: LabelResult::Success,
        failure_type: None,
        stage: None,
        fix_dir_x: None,
        fix_n_x: None,
        fix_dir_y: None,
        fix_n_y: None,
        gripper_fix: None,
        summary: String::new(),
    };
    l.summary = summary_for(&l);
    l
}

/// Deterministic label for an injected failure.
pub fn generate_label(spec: &PerturbationSpec, cfg: &LabelConfig) -> Result<FixLabel, LabelError> {
    let mut l = FixLabel {
        result: LabelResult::Fail,
        failure_type: Some(spec.failure_type),
        stage: None,
        fix_dir_x: None,
        fix_n_x: None,
        fix_dir_y: None,
        fix_n_y: None,
        gripper_fix: None,
        summary: String::new(),
    };
    match spec.failure_type {
        FailureType::Translation => {
            let missing = |k: &str| LabelError::new(ErrorClass::MissingField, k, "translation spec lacks an offset");
            let ox = spec.offset_x.ok_or_else(|| missing("offset_x"))?;
            let oy = spec.offset_y.ok_or_else(|| missing("offset_y"))?;
            let (dx, nx) = axis_fix(ox, cfg.bin_size, AxisDir::PlusX);
            let (dy, ny) = axis_fix(oy, cfg.bin_size, AxisDir::PlusY);
            if nx == 0 && ny == 0 {
                return Err(LabelError::new(
                    ErrorClass::SchemaViolation,
                    format!("({ox}, {oy})"),
                    "translation offset rounds to zero bins",
                ));
            }
            l.stage = Some(Stage::PreGrasp);
            (l.fix_dir_x, l.fix_n_x, l.fix_dir_y, l.fix_n_y) = (Some(dx), Some(nx), Some(dy), Some(ny));
        }
        ty => {
            let strength = if ty == FailureType::WeakClose {
                quantize_strength((cfg.attach_strength + cfg.strength_margin).min(1.0))
            } else {
                1.0
            };
            l.stage = Some(Stage::Grasp);
            l.gripper_fix = Some(GripperFix {
                close_at: spec.keyframe,
                strength,
            });
        }
    }
    l.summary = summary_for(&l);
    Ok(l)
}

fn looks_like_kv(segment: &str) -> Option<(&str, &str)> {
    let (k, v) = segment.split_once('=')?;
    let k = k.trim();
    if !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Some((k, v.trim()))
    } else {
        None
    }
}

impl FixLabel {
    /// Checks the field invariants for the label's result and type.
    pub fn validate(&self) -> Result<(), LabelError> {
        let viol = |tok: &str, msg: &str| Err(LabelError::new(ErrorClass::SchemaViolation, tok, msg));
        let missing = |tok: &str| Err(LabelError::new(ErrorClass::MissingField, tok, "required field absent"));
        let has_axis = self.fix_dir_x.is_some() || self.fix_n_x.is_some() || self.fix_dir_y.is_some() || self.fix_n_y.is_some();
        if self.summary != self.summary.trim() {
            return viol(&self.summary, "summary has surrounding whitespace");
        }
        if self.summary.split(';').next().and_then(looks_like_kv).is_some() {
            return viol(&self.summary, "summary starts with a KEY=VALUE segment");
        }
        match self.result {
            LabelResult::Success => {
                if self.failure_type.is_some() || self.stage.is_some() || has_axis || self.gripper_fix.is_some() {
                    return viol("RESULT=SUCCESS", "success label carries failure fields");
                }
            }
            LabelResult::Fail => {
                let Some(ty) = self.failure_type else { return missing("TYPE") };
                if self.stage.is_none() {
                    return missing("STAGE");
                }
                if ty == FailureType::Translation {
                    if self.gripper_fix.is_some() {
                        return viol("CLOSE_AT", "translation label carries a gripper fix");
                    }
                    for (key, present) in [
                        ("FIX_DIR_X", self.fix_dir_x.is_some()),
                        ("FIX_N_X", self.fix_n_x.is_some()),
                        ("FIX_DIR_Y", self.fix_dir_y.is_some()),
                        ("FIX_N_Y", self.fix_n_y.is_some()),
                    ] {
                        if !present {
                            return missing(key);
                        }
                    }
                    if self.fix_dir_x.is_some_and(|d| !d.is_x()) {
                        return Err(LabelError::new(ErrorClass::Domain, "FIX_DIR_X", "x field takes +x or -x"));
                    }
                    if self.fix_dir_y.is_some_and(|d| d.is_x()) {
                        return Err(LabelError::new(ErrorClass::Domain, "FIX_DIR_Y", "y field takes +y or -y"));
                    }
                } else {
                    if has_axis {
                        return viol("FIX_DIR_X", "gripper label carries axis fields");
                    }
                    let Some(g) = self.gripper_fix else { return missing("CLOSE_AT") };
                    if !(0.0..=1.0).contains(&g.strength) {
                        return Err(LabelError::new(ErrorClass::Domain, "STRENGTH", "strength outside [0, 1]"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical text form. Structured fields come first in the fixed order.
    pub fn serialize(&self) -> String {
        let mut parts = vec![format!("RESULT={}", self.result.as_str())];
        if let Some(t) = self.failure_type {
            parts.push(format!("TYPE={t}"));
        }
        if let Some(s) = self.stage {
            parts.push(format!("STAGE={}", s.as_str()));
        }
        for (k, d) in [("FIX_DIR_X", self.fix_dir_x), ("FIX_DIR_Y", self.fix_dir_y)] {
            if let Some(d) = d {
                parts.push(format!("{k}={}", d.as_str()));
                let n = if k == "FIX_DIR_X" { self.fix_n_x } else { self.fix_n_y };
                if let Some(n) = n {
                    parts.push(format!("{}={n}", k.replace("DIR", "N")));
                }
            } else {
                let (nk, n) = if k == "FIX_DIR_X" { ("FIX_N_X", self.fix_n_x) } else { ("FIX_N_Y", self.fix_n_y) };
                if let Some(n) = n {
                    parts.push(format!("{nk}={n}"));
                }
            }
        }
        if let Some(g) = self.gripper_fix {
            parts.push(format!("CLOSE_AT={}", g.close_at));
            parts.push(format!("STRENGTH={:.2}", g.strength));
        }
        let mut out = parts.join("; ");
        out.push_str("; ");
        out.push_str(&self.summary);
        out
    }

    /// Structured fields only, for comparisons that ignore the summary.
    pub fn structured_prefix(&self) -> String {
        let full = self.serialize();
        full[..full.len() - self.summary.len()].to_string()
    }
}

impl fmt::Display for FixLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

fn parse_count(key: &str, v: &str) -> Result<u32, LabelError> {
    if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
        return Err(LabelError::new(ErrorClass::Numeric, format!("{key}={v}"), "expected a non-negative integer"));
    }
    v.parse()
        .map_err(|_| LabelError::new(ErrorClass::Numeric, format!("{key}={v}"), "integer out of range"))
}

fn parse_index(key: &str, v: &str) -> Result<usize, LabelError> {
    parse_count(key, v).map(|n| n as usize)
}

fn parse_strength(v: &str) -> Result<f64, LabelError> {
    let tok = format!("STRENGTH={v}");
    let ok = {
        let mut parts = v.splitn(2, '.');
        let int = parts.next().unwrap_or("");
        let frac = parts.next();
        !int.is_empty() && int.bytes().all(|b| b.is_ascii_digit()) && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
    };
    if !ok {
        return Err(LabelError::new(ErrorClass::Numeric, tok, "expected a decimal number"));
    }
    let s: f64 = v
        .parse()
        .map_err(|_| LabelError::new(ErrorClass::Numeric, tok.clone(), "expected a decimal number"))?;
    if !(0.0..=1.0).contains(&s) {
        return Err(LabelError::new(ErrorClass::Domain, tok, "strength outside [0, 1]"));
    }
    Ok(s)
}

/// Parses the label grammar. Errors name the first offending token.
pub fn parse(text: &str) -> Result<FixLabel, LabelError> {
    if text.trim().is_empty() {
        return Err(LabelError::new(ErrorClass::Syntax, "", "empty label"));
    }
    let mut fields: [Option<String>; 9] = Default::default();
    let mut rest = text;
    let summary;
    loop {
        let (segment, tail) = match rest.split_once(';') {
            Some((s, t)) => (s, Some(t)),
            None => (rest, None),
        };
        let trimmed = segment.trim();
        if trimmed.is_empty() {
            match tail {
                // "; " at the end of the prefix leaves an empty summary
                None => {
                    summary = String::new();
                    break;
                }
                Some(_) => return Err(LabelError::new(ErrorClass::Syntax, segment, "empty segment")),
            }
        }
        if trimmed.starts_with('=') {
            return Err(LabelError::new(ErrorClass::Syntax, trimmed, "missing key"));
        }
        let Some((key, value)) = looks_like_kv(trimmed) else {
            summary = rest.trim().to_string();
            break;
        };
        let upper = key.to_ascii_uppercase();
        let Some(slot) = KEYS.iter().position(|k| *k == upper) else {
            return Err(LabelError::new(ErrorClass::UnknownKey, key, "unknown key"));
        };
        if value.is_empty() {
            return Err(LabelError::new(ErrorClass::Syntax, trimmed, "empty value"));
        }
        if fields[slot].is_some() {
            return Err(LabelError::new(ErrorClass::Duplicate, key, "key appears twice"));
        }
        fields[slot] = Some(value.to_string());
        match tail {
            Some(t) => rest = t,
            None => {
                summary = String::new();
                break;
            }
        }
    }

    let get = |i: usize| fields[i].as_deref();
    let result = match get(0) {
        None => return Err(LabelError::new(ErrorClass::MissingField, "RESULT", "required field absent")),
        Some("SUCCESS") => LabelResult::Success,
        Some("FAIL") => LabelResult::Fail,
        Some(v) => return Err(LabelError::new(ErrorClass::Domain, format!("RESULT={v}"), "expected SUCCESS or FAIL")),
    };
    let failure_type = get(1)
        .map(|v| FailureType::parse(v).ok_or_else(|| LabelError::new(ErrorClass::Domain, format!("TYPE={v}"), "unknown failure type")))
        .transpose()?;
    let stage = get(2)
        .map(|v| {
            Stage::ALL
                .into_iter()
                .find(|s| s.as_str() == v)
                .ok_or_else(|| LabelError::new(ErrorClass::Domain, format!("STAGE={v}"), "unknown stage"))
        })
        .transpose()?;
    let dir = |i: usize, key: &str| {
        get(i)
            .map(|v| AxisDir::parse(v).ok_or_else(|| LabelError::new(ErrorClass::Domain, format!("{key}={v}"), "expected +x, -x, +y or -y")))
            .transpose()
    };
    let fix_dir_x = dir(3, "FIX_DIR_X")?;
    let fix_n_x = get(4).map(|v| parse_count("FIX_N_X", v)).transpose()?;
    let fix_dir_y = dir(5, "FIX_DIR_Y")?;
    let fix_n_y = get(6).map(|v| parse_count("FIX_N_Y", v)).transpose()?;
    let close_at = get(7).map(|v| parse_index("CLOSE_AT", v)).transpose()?;
    let strength = get(8).map(parse_strength).transpose()?;
    let gripper_fix = match (close_at, strength) {
        (Some(close_at), Some(strength)) => Some(GripperFix { close_at, strength }),
        (None, None) => None,
        (Some(_), None) => return Err(LabelError::new(ErrorClass::MissingField, "STRENGTH", "CLOSE_AT without STRENGTH")),
        (None, Some(_)) => return Err(LabelError::new(ErrorClass::MissingField, "CLOSE_AT", "STRENGTH without CLOSE_AT")),
    };
    let label = FixLabel {
        result,
        failure_type,
        stage,
        fix_dir_x,
        fix_n_x,
        fix_dir_y,
        fix_n_y,
        gripper_fix,
        summary,
    };
    label.validate()?;
    Ok(label)
}

/// Pulls a `RESULT=` value out of text that does not parse as a whole.
pub fn extract_result(text: &str) -> Option<LabelResult> {
    text.split(';').find_map(|seg| {
        let (k, v) = looks_like_kv(seg.trim())?;
        if !k.eq_ignore_ascii_case("RESULT") {
            return None;
        }
        match v {
            "SUCCESS" => Some(LabelResult::Success),
            "FAIL" => Some(LabelResult::Fail),
            _ => None,
        }
    })
}
