//! Late fusion of two answer classifiers.
//!
//! Scores are the elementwise product of the two distributions and are left
//! unnormalized. Ties go to the lowest class index. Early fusion needs no
//! code here: it is an input mode trained end-to-end.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::QuestionId;
use crate::error::{Error, Result};
use crate::modeling::adapters::{AnswerClassifier, ClassifierInput, DistributionDump};
use crate::modeling::distribution::{argmax, PredictionDistribution};
use crate::vocab::AnswerVocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedPrediction {
    /// Raw products, not renormalized.
    pub scores: Vec<f64>,
    pub argmax: usize,
    pub provenance: Vec<String>,
}

pub fn late_fuse(p1: &PredictionDistribution, p2: &PredictionDistribution) -> Result<FusedPrediction> {
    fuse_scores(p1.probs(), p2.probs()).map(|(scores, argmax)| FusedPrediction {
        scores,
        argmax,
        provenance: Vec::new(),
    })
}

/// Product of two nonnegative score vectors and its argmax. Also accepts
/// unnormalized inputs, e.g. an earlier fused result.
pub fn fuse_scores(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, usize)> {
    if a.len() != b.len() {
        return Err(Error::Fusion(format!(
            "distributions over {} and {} classes",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Fusion("empty distributions".into()));
    }
    let scores: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let best = argmax(&scores).expect("non-empty");
    Ok((scores, best))
}

/// Runs both classifiers on their own view of one question and answers with
/// the argmax of the product.
pub fn predict_fused(
    a: &dyn AnswerClassifier,
    b: &dyn AnswerClassifier,
    input_a: &ClassifierInput,
    input_b: &ClassifierInput,
    vocab: &AnswerVocab,
) -> Result<(String, FusedPrediction)> {
    if input_a.question_id != input_b.question_id || input_a.image_id != input_b.image_id {
        return Err(Error::Fusion(format!(
            "inputs describe different questions ({} and {})",
            input_a.question_id, input_b.question_id
        )));
    }
    for clf in [a, b] {
        if clf.n_label() != vocab.n_label() {
            return Err(Error::Fusion(format!(
                "{} predicts {} classes, vocabulary has {}",
                clf.name(),
                clf.n_label(),
                vocab.n_label()
            )));
        }
    }
    let (pa, pb) = rayon::join(|| a.classify(input_a), || b.classify(input_b));
    let pa = pa.map_err(|e| named(a.name(), e))?;
    let pb = pb.map_err(|e| named(b.name(), e))?;
    let mut fused = late_fuse(&pa, &pb)?;
    fused.provenance = vec![a.name().to_string(), b.name().to_string()];
    let answer = vocab
        .answer(fused.argmax)
        .expect("argmax within vocabulary")
        .to_string();
    Ok((answer, fused))
}

fn named(name: &str, e: Error) -> Error {
    match e {
        Error::Adapter { .. } => e,
        other => Error::Adapter {
            name: name.to_string(),
            message: other.to_string(),
        },
    }
}

/// Fuses two distribution dumps question by question. Both must cover the
/// same questions over a vocabulary of the same size.
pub fn fuse_dumps(
    a: &DistributionDump,
    b: &DistributionDump,
    vocab: &AnswerVocab,
) -> Result<BTreeMap<QuestionId, String>> {
    for d in [a, b] {
        if d.n_label != vocab.n_label() {
            return Err(Error::Fusion(format!(
                "{} has {} classes, vocabulary has {}",
                d.model,
                d.n_label,
                vocab.n_label()
            )));
        }
    }
    let (ta, tb) = (a.by_question(), b.by_question());
    if ta.len() != tb.len() || ta.keys().zip(tb.keys()).any(|(x, y)| x != y) {
        let missing: Vec<String> = ta
            .keys()
            .filter(|q| !tb.contains_key(q))
            .chain(tb.keys().filter(|q| !ta.contains_key(q)))
            .take(5)
            .map(|q| q.to_string())
            .collect();
        return Err(Error::Fusion(format!(
            "{} and {} cover different questions (e.g. {})",
            a.model,
            b.model,
            missing.join(", ")
        )));
    }
    ta.iter()
        .map(|(&qid, pa)| {
            let fused = late_fuse(pa, tb[&qid])?;
            Ok((qid, vocab.answer(fused.argmax).expect("in range").to_string()))
        })
        .collect()
}
