//! VQA accuracy, answer normalization, corpus evaluation and run aggregation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationRecord, QuestionId, ANSWERS_PER_QUESTION};
use crate::error::{Error, Result};

/// Canonical answer form used for matching, counting and vocabularies.
///
/// Rules, applied in order:
/// 1. Unicode lowercase.
/// 2. Delete every ASCII punctuation character (`it's` becomes `its`).
/// 3. Trim and collapse runs of whitespace to one ASCII space.
///
/// Articles and digits are left as they are. The function is idempotent.
pub fn normalize_answer(raw: &str) -> String {
    let stripped: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `x` for one distinct answer: how many of the ten annotators gave it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerCount {
    pub answer: String,
    pub count: usize,
}

/// Distinct answers of one question, most frequent first, ties by answer.
pub fn count_answers(annotation: &AnnotationRecord) -> Vec<AnswerCount> {
    let mut counts: Vec<AnswerCount> = annotation
        .answer_counts()
        .into_iter()
        .map(|(answer, count)| AnswerCount {
            answer: answer.to_string(),
            count,
        })
        .collect();
    counts.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.answer.cmp(&b.answer)));
    counts
}

/// `min(x / 3, 1)` as an exact member of `{0, 1/3, 2/3, 1}`.
pub fn accuracy_from_count(x: usize) -> f64 {
    x.min(3) as f64 / 3.0
}

/// Which form of the VQA accuracy to compute.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// `min(x/3, 1)` over all ten annotations.
    #[default]
    Literal,
    /// The official evaluation server variant: average of `min(x_i/3, 1)`
    /// over the ten leave-one-annotator-out subsets.
    SubsetAveraged,
}

/// VQA accuracy of one answer against a question's ten annotations. An answer
/// that normalizes to the empty string scores 0.
pub fn vqa_accuracy(answer: &str, annotation: &AnnotationRecord) -> f64 {
    vqa_accuracy_with(answer, annotation, AccuracyMode::Literal)
}

pub fn vqa_accuracy_with(answer: &str, annotation: &AnnotationRecord, mode: AccuracyMode) -> f64 {
    let answer = normalize_answer(answer);
    if answer.is_empty() {
        return 0.0;
    }
    let matches: Vec<bool> = annotation.answers().iter().map(|a| *a == answer).collect();
    let x = matches.iter().filter(|&&m| m).count();
    match mode {
        AccuracyMode::Literal => accuracy_from_count(x),
        AccuracyMode::SubsetAveraged => {
            let total: f64 = matches
                .iter()
                .map(|&held_out| accuracy_from_count(x - usize::from(held_out)))
                .sum();
            total / ANSWERS_PER_QUESTION as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_question: BTreeMap<QuestionId, f64>,
    pub mean_score: f64,
    pub n: usize,
    /// Annotated questions without a prediction; they score 0.
    pub unanswered: BTreeSet<QuestionId>,
}

/// Scores predictions against every annotated question. Questions without a
/// prediction count as 0 and are listed in `unanswered`.
pub fn evaluate_predictions(
    predictions: &BTreeMap<QuestionId, String>,
    annotations: &[AnnotationRecord],
    mode: AccuracyMode,
) -> Result<EvalReport> {
    let by_qid: HashMap<QuestionId, &AnnotationRecord> =
        annotations.iter().map(|a| (a.question_id, a)).collect();
    let unknown: Vec<QuestionId> = predictions
        .keys()
        .filter(|q| !by_qid.contains_key(q))
        .copied()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Validation(format!(
            "predictions for unannotated questions {unknown:?}"
        )));
    }

    let scored: Vec<(QuestionId, Option<f64>)> = annotations
        .par_iter()
        .map(|ann| {
            let score = predictions
                .get(&ann.question_id)
                .map(|p| vqa_accuracy_with(p, ann, mode));
            (ann.question_id, score)
        })
        .collect();

    let mut per_question = BTreeMap::new();
    let mut unanswered = BTreeSet::new();
    for (qid, score) in scored {
        if score.is_none() {
            unanswered.insert(qid);
        }
        per_question.insert(qid, score.unwrap_or(0.0));
    }
    let n = per_question.len();
    let mean_score = if n == 0 {
        0.0
    } else {
        per_question.values().sum::<f64>() / n as f64
    };
    Ok(EvalReport {
        per_question,
        mean_score,
        n,
        unanswered,
    })
}

pub fn write_report(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let body = serde_json::to_string_pretty(report).map_err(|e| Error::parse(path, e))?;
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))
}

/// Mean and sample standard deviation over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub run_scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl std::fmt::Display for RunAggregate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:.4} ± {:.4} (n={})",
            self.mean,
            self.std,
            self.run_scores.len()
        )
    }
}

/// Aggregates raw run scores. Uses the n−1 denominator; one run has std 0.
pub fn aggregate_scores(run_scores: &[f64]) -> Result<RunAggregate> {
    if run_scores.is_empty() {
        return Err(Error::Precondition("aggregate of zero runs".into()));
    }
    let n = run_scores.len() as f64;
    let mean = run_scores.iter().sum::<f64>() / n;
    let std = if run_scores.len() == 1 {
        0.0
    } else {
        (run_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    // Summation rounding can push the mean a hair outside the run range.
    let lo = run_scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = run_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RunAggregate {
        run_scores: run_scores.to_vec(),
        mean: mean.clamp(lo, hi),
        std,
    })
}

pub fn aggregate_runs(reports: &[EvalReport]) -> Result<RunAggregate> {
    let scores: Vec<f64> = reports.iter().map(|r| r.mean_score).collect();
    aggregate_scores(&scores)
}
