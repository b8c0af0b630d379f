//! Text and correction metrics over (ground truth, prediction) label pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::label::{extract_result, parse, FixLabel, LabelResult};
use crate::model::FailureType;
use crate::transport::{call_typed, JsonTransport, RetryPolicy, TransportError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("ground truth {0} is not a FAIL label")]
    NotFailure(String),
    #[error("no prediction for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("duplicate prediction id {0}")]
    DuplicatePrediction(String),
    #[error("judge unavailable for {id}: {reason}")]
    Judge { id: String, reason: TransportError },
}

/// Lowercased whitespace tokens with punctuation removed. `=`, `_`, `+` and `-` are
/// kept so schema tokens survive, as is a `.` between two digits.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            let chars: Vec<char> = w.chars().collect();
            chars
                .iter()
                .enumerate()
                .filter(|&(i, &c)| {
                    c.is_alphanumeric()
                        || matches!(c, '=' | '_' | '+' | '-')
                        || (c == '.'
                            && i > 0
                            && i + 1 < chars.len()
                            && chars[i - 1].is_ascii_digit()
                            && chars[i + 1].is_ascii_digit())
                })
                .flat_map(|(_, c)| c.to_lowercase())
                .collect::<String>()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn lcs_row<T: PartialEq>(a: &[T], b: &[T], row: &mut [usize]) -> usize {
    // single-row dynamic program; `diag` carries the previous row's left neighbour
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Bit-parallel LCS length for `b.len() <= 64`: one word per row of the table.
fn lcs_bits<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let full = if b.len() == 64 { !0u64 } else { (1u64 << b.len()) - 1 };
    let mut v = !0u64;
    for x in a {
        let mut m = 0u64;
        for y in b.iter().rev() {
            m = m << 1 | (x == y) as u64;
        }
        let u = v & m;
        v = v.wrapping_add(u) | (v & !m);
    }
    (!v & full).count_ones() as usize
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if b.len() <= 64 {
        lcs_bits(a, b)
    } else {
        lcs_row(a, b, &mut vec![0; b.len() + 1])
    }
}

/// F1 of token-level LCS precision and recall. Two empty token lists score 1.
pub fn rouge_l_tokens<T: PartialEq>(hyp: &[T], reference: &[T]) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let l = lcs_len(hyp, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / hyp.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn rouge_l(hyp: &str, reference: &str) -> f64 {
    rouge_l_tokens(&tokenize(hyp), &tokenize(reference))
}

/// Maps texts to vectors for cosine similarity.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, TransportError>;
}

/// Token counts over the joint vocabulary of the texts in one call.
#[derive(Debug, Default, Clone, Copy)]
pub struct TokenFrequency;

impl Embedder for TokenFrequency {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, TransportError> {
        let tokenized: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
        let vocab: BTreeMap<&str, usize> = tokenized
            .iter()
            .flatten()
            .map(String::as_str)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        Ok(tokenized
            .iter()
            .map(|toks| {
                let mut v = vec![0.0; vocab.len()];
                for t in toks {
                    v[vocab[t.as_str()]] += 1.0;
                }
                v
            })
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Embedding service behind a JSON transport.
pub struct RemoteEmbedder<T> {
    pub transport: T,
}

impl<T: JsonTransport> Embedder for RemoteEmbedder<T> {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, TransportError> {
        let req = EmbedRequest {
            texts: texts.iter().map(|s| s.to_string()).collect(),
        };
        let resp: EmbedResponse = call_typed(&self.transport, &req)?;
        if resp.vectors.len() != texts.len() {
            return Err(TransportError::Protocol(format!(
                "expected {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        Ok(resp.vectors)
    }
}

/// Cosine of two vectors clipped to [0, 1]; zero vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

pub fn cosine_sim(hyp: &str, reference: &str, embedder: &dyn Embedder) -> Result<f64, TransportError> {
    if hyp == reference {
        return Ok(1.0);
    }
    let v = embedder.embed(&[hyp, reference])?;
    Ok(cosine(&v[0], &v[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    Correct,
    PartiallyCorrect,
    Incorrect,
}

impl Rating {
    pub fn score(self) -> f64 {
        match self {
            Rating::Correct => 1.0,
            Rating::PartiallyCorrect => 0.5,
            Rating::Incorrect => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub reference: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub rating: Rating,
}

pub trait FuzzyJudge: Send + Sync {
    fn rate(&self, request: &JudgeRequest) -> Result<JudgeResponse, TransportError>;
}

/// Rates by comparing parsed structured fields.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockJudge;

impl MockJudge {
    pub fn answer(request: &JudgeRequest) -> JudgeResponse {
        let rating = match (parse(&request.reference), parse(&request.prediction)) {
            (Ok(g), Ok(p)) if g.structured_prefix() == p.structured_prefix() => Rating::Correct,
            (Ok(g), Ok(p)) if g.failure_type == p.failure_type && g.stage == p.stage => Rating::PartiallyCorrect,
            _ => Rating::Incorrect,
        };
        JudgeResponse { rating }
    }
}

impl FuzzyJudge for MockJudge {
    fn rate(&self, request: &JudgeRequest) -> Result<JudgeResponse, TransportError> {
        Ok(Self::answer(request))
    }
}

pub struct RemoteJudge<T> {
    pub transport: T,
}

impl<T: JsonTransport> FuzzyJudge for RemoteJudge<T> {
    fn rate(&self, request: &JudgeRequest) -> Result<JudgeResponse, TransportError> {
        call_typed(&self.transport, request)
    }
}

/// Success/failure detection: parsed RESULT, else a `RESULT=` token, else wrong.
pub fn binary_success(gt: &FixLabel, pred_text: &str) -> bool {
    let pred = parse(pred_text).map(|l| l.result).ok().or_else(|| extract_result(pred_text));
    pred == Some(gt.result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccConfig {
    /// Bin deviation at which a translation axis earns no credit.
    pub cap: f64,
    /// Keyframe tolerance for gripper fixes, steps.
    pub delta_k: usize,
}

impl Default for AccConfig {
    fn default() -> Self {
        Self { cap: 3.0, delta_k: 2 }
    }
}

fn axis_score(gt: (Option<crate::label::AxisDir>, Option<u32>), pred: (Option<crate::label::AxisDir>, Option<u32>), cap: f64) -> f64 {
    match (gt, pred) {
        ((Some(dg), Some(ng)), (Some(dp), Some(np))) if dg == dp => {
            (1.0 - (ng as f64 - np as f64).abs() / cap).max(0.0)
        }
        _ => 0.0,
    }
}

/// Correction accuracy of `pred` against a FAIL ground truth.
pub fn correction_acc(gt: &FixLabel, pred: &FixLabel, cfg: &AccConfig) -> Result<f64, EvalError> {
    if gt.result != LabelResult::Fail {
        return Err(EvalError::NotFailure(gt.serialize()));
    }
    let gt_ty = gt.failure_type.ok_or_else(|| EvalError::NotFailure(gt.serialize()))?;
    let family = |t: Option<FailureType>| t.map(FailureType::is_gripper);
    let same_family = pred.result == LabelResult::Fail && family(pred.failure_type) == Some(gt_ty.is_gripper());
    let s_type = f64::from(u8::from(same_family && pred.failure_type == Some(gt_ty)));
    let s_stage = f64::from(u8::from(pred.stage.is_some() && pred.stage == gt.stage));
    if gt_ty == FailureType::Translation {
        let (s_x, s_y) = if same_family {
            (
                axis_score((gt.fix_dir_x, gt.fix_n_x), (pred.fix_dir_x, pred.fix_n_x), cfg.cap),
                axis_score((gt.fix_dir_y, gt.fix_n_y), (pred.fix_dir_y, pred.fix_n_y), cfg.cap),
            )
        } else {
            (0.0, 0.0)
        };
        Ok((s_type + s_stage + s_x + s_y) / 4.0)
    } else {
        let s_k = match (same_family, gt.gripper_fix, pred.gripper_fix) {
            (true, Some(g), Some(p)) => f64::from(u8::from(g.close_at.abs_diff(p.close_at) <= cfg.delta_k)),
            _ => 0.0,
        };
        Ok((s_type + s_stage + s_k) / 3.0)
    }
}

/// Prediction file record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub pred_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub gt: FixLabel,
    pub pred_text: String,
    pub pred: Option<FixLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub rouge_l: f64,
    pub cosine: f64,
    pub fuzzy: f64,
    /// Only defined for FAIL ground truths.
    pub acc: Option<f64>,
    pub bin_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub records: usize,
    pub failures: usize,
    pub rouge_l: f64,
    pub cosine: f64,
    /// Fraction in [0, 1]; the table prints it as a percentage.
    pub bin_succ: f64,
    pub fuzzy: f64,
    /// Mean over FAIL ground truths; `None` when there are none.
    pub acc: Option<f64>,
    /// Name of the embedder behind `cosine`.
    pub embedder: String,
}

pub struct Evaluator<'a> {
    pub acc: AccConfig,
    pub judge: &'a dyn FuzzyJudge,
    pub embedder: &'a dyn Embedder,
    pub embedder_name: String,
    pub retry: RetryPolicy,
}

impl Evaluator<'_> {
    pub fn record(&self, id: &str, gt: &FixLabel, pred_text: &str) -> Result<EvalRecord, EvalError> {
        let gt_text = gt.serialize();
        let parsed = parse(pred_text);
        let judge_err = |reason| EvalError::Judge {
            id: id.to_string(),
            reason,
        };
        let cosine = self
            .retry
            .run(|| cosine_sim(pred_text, &gt_text, self.embedder))
            .map_err(judge_err)?;
        let request = JudgeRequest {
            reference: gt_text.clone(),
            prediction: pred_text.to_string(),
        };
        let fuzzy = self.retry.run(|| self.judge.rate(&request)).map_err(judge_err)?.rating.score();
        let acc = match (gt.result, &parsed) {
            (LabelResult::Fail, Ok(p)) => Some(correction_acc(gt, p, &self.acc)?),
            (LabelResult::Fail, Err(_)) => Some(0.0),
            (LabelResult::Success, _) => None,
        };
        Ok(EvalRecord {
            id: id.to_string(),
            gt: gt.clone(),
            pred_text: pred_text.to_string(),
            rouge_l: rouge_l(pred_text, &gt_text),
            cosine,
            fuzzy,
            acc,
            bin_correct: binary_success(gt, pred_text),
            parse_error: parsed.as_ref().err().map(|e| e.to_string()),
            pred: parsed.ok(),
        })
    }

    /// Scores every ground-truth record; each must have exactly one prediction.
    pub fn evaluate(
        &self,
        ground_truth: &[(String, FixLabel)],
        predictions: &[Prediction],
    ) -> Result<(EvalSummary, Vec<EvalRecord>), EvalError> {
        if ground_truth.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut by_id = BTreeMap::new();
        for p in predictions {
            if by_id.insert(p.id.as_str(), p.pred_text.as_str()).is_some() {
                return Err(EvalError::DuplicatePrediction(p.id.clone()));
            }
        }
        let missing: Vec<String> = ground_truth
            .iter()
            .filter(|(id, _)| !by_id.contains_key(id.as_str()))
            .map(|(id, _)| id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(EvalError::MissingPredictions(missing));
        }
        let records = ground_truth
            .par_iter()
            .map(|(id, gt)| self.record(id, gt, by_id[id.as_str()]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((summarize(&records, &self.embedder_name)?, records))
    }
}

pub fn summarize(records: &[EvalRecord], embedder: &str) -> Result<EvalSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&EvalRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let accs: Vec<f64> = records.iter().filter_map(|r| r.acc).collect();
    Ok(EvalSummary {
        records: records.len(),
        failures: accs.len(),
        rouge_l: mean(&|r| r.rouge_l),
        cosine: mean(&|r| r.cosine),
        bin_succ: mean(&|r| f64::from(u8::from(r.bin_correct))),
        fuzzy: mean(&|r| r.fuzzy),
        acc: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
        embedder: embedder.to_string(),
    })
}

/// Aligned plain-text table, one row per named summary.
pub fn render_table(rows: &[(String, EvalSummary)]) -> String {
    let header = ["Method", "ROUGE_L", "Cos. Sim.", "BinSucc(%)", "Fuzzy Match", "Acc."];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|(name, s)| {
            [
                name.clone(),
                format!("{:.3}", s.rouge_l),
                format!("{:.3}", s.cosine),
                format!("{:.1}", 100.0 * s.bin_succ),
                format!("{:.3}", s.fuzzy),
                s.acc.map_or_else(|| "n/a".to_string(), |a| format!("{:.3}", a)),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{:<w$}", c, w = width[i]) } else { format!("{:>w$}", c, w = width[i]) })
            .collect();
        let _ = writeln!(out, "{}", parts.join(" | ").trim_end());
    };
    line(&mut out, &header);
    let _ = writeln!(
        out,
        "{}",
        width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-")
    );
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_I: &str = "RESULT=FAIL; TYPE=translation; STAGE=pre_grasp; FIX_DIR_X=-x; FIX_N_X=2; FIX_DIR_Y=+y; FIX_N_Y=3; shift";

    #[test]
    fn bit_kernel_matches_table() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for len_b in [0, 1, 7, 63, 64, 65, 90] {
            for _ in 0..50 {
                let a: Vec<u8> = (0..rng.random_range(0..80)).map(|_| rng.random_range(0..4)).collect();
                let b: Vec<u8> = (0..len_b).map(|_| rng.random_range(0..4)).collect();
                let dp = lcs_row(&a, &b, &mut vec![0; b.len() + 1]);
                assert_eq!(lcs_len(&a, &b), dp);
                if b.len() <= 64 {
                    assert_eq!(lcs_bits(&a, &b), dp);
                }
            }
        }
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l("a b c", "a b c"), 1.0);
        assert_eq!(rouge_l("a b", "c d"), 0.0);
        assert!((rouge_l("a b c", "a c d") - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_examples() {
        let e = TokenFrequency;
        assert_eq!(cosine_sim("x y", "x y", &e).unwrap(), 1.0);
        assert_eq!(cosine_sim("a", "b", &e).unwrap(), 0.0);
        assert!((cosine_sim("a a b", "a b", &e).unwrap() - 3.0 / 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tokens_keep_schema_symbols() {
        assert_eq!(tokenize("FIX_DIR_X=-x; STRENGTH=0.90. Done!"), ["fix_dir_x=-x", "strength=0.90", "done"]);
    }

    #[test]
    fn binary_fallback() {
        let gt = parse(TABLE_I).unwrap();
        assert!(binary_success(&gt, TABLE_I));
        assert!(binary_success(&gt, "RESULT=FAIL; TYPE=wobble"));
        assert!(!binary_success(&gt, "RESULT=SUCCESS; fine"));
        assert!(!binary_success(&gt, "garbage"));
    }

    #[test]
    fn mock_judge_levels() {
        let rate = |p: &str| {
            MockJudge::answer(&JudgeRequest {
                reference: TABLE_I.into(),
                prediction: p.into(),
            })
            .rating
        };
        assert_eq!(rate(TABLE_I), Rating::Correct);
        assert_eq!(rate(&TABLE_I.replace("FIX_N_X=2", "FIX_N_X=5")), Rating::PartiallyCorrect);
        assert_eq!(rate("RESULT=SUCCESS; ok"), Rating::Incorrect);
    }

    #[test]
    fn table_has_the_columns() {
        let s = EvalSummary {
            records: 1,
            failures: 1,
            rouge_l: 1.0,
            cosine: 1.0,
            bin_succ: 1.0,
            fuzzy: 1.0,
            acc: Some(1.0),
            embedder: "token_frequency".into(),
        };
        let t = render_table(&[("oracle".into(), s)]);
        let cols: Vec<&str> = t.lines().next().unwrap().split('|').map(str::trim).collect();
        assert_eq!(cols, ["Method", "ROUGE_L", "Cos. Sim.", "BinSucc(%)", "Fuzzy Match", "Acc."]);
        assert!(t.contains("100.0"));
    }
}
