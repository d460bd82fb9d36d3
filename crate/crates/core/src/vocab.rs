//! Answer vocabulary, soft-label targets and generative target pools.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationRecord, QuestionId};
use crate::error::{Error, Result};
use crate::metrics::{accuracy_from_count, normalize_answer};
use crate::seeding::{rng_for, STREAM_TARGET};

/// Fixed answer class space. Index `i` is line `i` of the vocabulary file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerVocab {
    answers: Vec<String>,
    index: HashMap<String, usize>,
}

impl AnswerVocab {
    /// Builds a vocabulary from answers in class order. Answers must already
    /// be normalized, non-empty and unique.
    pub fn from_answers(answers: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(answers.len());
        for (i, a) in answers.iter().enumerate() {
            if a.is_empty() || normalize_answer(a) != *a {
                return Err(Error::Validation(format!(
                    "vocabulary entry {i} ({a:?}) is not a normalized answer"
                )));
            }
            if index.insert(a.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary entry {a:?}")));
            }
        }
        Ok(Self { answers, index })
    }

    pub fn n_label(&self) -> usize {
        self.answers.len()
    }

    pub fn index_of(&self, answer: &str) -> Option<usize> {
        self.index.get(answer).copied()
    }

    pub fn answer(&self, index: usize) -> Option<&str> {
        self.answers.get(index).map(String::as_str)
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let answers: Vec<String> = raw.lines().map(str::to_string).collect();
        Self::from_answers(answers).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = self.answers.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// How many answers make it into the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabCutoff {
    /// Every answer given at least this many times across the corpus.
    MinCount(usize),
    /// The most frequent answers, at most this many.
    MaxSize(usize),
}

impl VocabCutoff {
    /// Exactly one of the two options must be set.
    pub fn from_options(min_count: Option<usize>, max_size: Option<usize>) -> Result<Self> {
        match (min_count, max_size) {
            (Some(c), None) => Ok(VocabCutoff::MinCount(c)),
            (None, Some(s)) => Ok(VocabCutoff::MaxSize(s)),
            (Some(_), Some(_)) => Err(Error::Config(
                "give either min_count or max_size for the vocabulary, not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "vocabulary needs a min_count or max_size cutoff".into(),
            )),
        }
    }
}

/// Corpus-wide occurrence counts of normalized, non-empty answers, most
/// frequent first with ties broken lexicographically.
pub fn answer_frequencies(annotations: &[AnnotationRecord]) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for ann in annotations {
        for a in ann.answers().iter().filter(|a| !a.is_empty()) {
            *counts.entry(a.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> =
        counts.into_iter().map(|(a, c)| (a.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn build_answer_vocab(
    annotations: &[AnnotationRecord],
    cutoff: VocabCutoff,
) -> Result<AnswerVocab> {
    if annotations.is_empty() {
        return Err(Error::Precondition(
            "cannot build a vocabulary from zero annotations".into(),
        ));
    }
    let ranked = answer_frequencies(annotations);
    let kept: Vec<String> = match cutoff {
        VocabCutoff::MinCount(min) => ranked
            .into_iter()
            .take_while(|(_, c)| *c >= min)
            .map(|(a, _)| a)
            .collect(),
        VocabCutoff::MaxSize(max) => ranked.into_iter().take(max).map(|(a, _)| a).collect(),
    };
    AnswerVocab::from_answers(kept)
}

/// Sparse target distribution for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    pub question_id: QuestionId,
    /// `(class index, probability)`, sorted by class index.
    pub entries: Vec<(usize, f64)>,
    /// Set when every annotated answer is out of vocabulary; `entries` is empty.
    pub fully_oov: bool,
}

impl SoftLabel {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.entries
            .iter()
            .find(|(k, _)| *k == class)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn to_dense(&self, n_label: usize) -> Vec<f64> {
        let mut y = vec![0.0; n_label];
        for &(k, p) in &self.entries {
            y[k] = p;
        }
        y
    }

    /// A one-hot label on `class`.
    pub fn one_hot(question_id: QuestionId, class: usize) -> Self {
        Self {
            question_id,
            entries: vec![(class, 1.0)],
            fully_oov: false,
        }
    }
}

/// Unnormalized weights `min(x/3, 1)` for each distinct in-vocabulary answer.
pub fn soft_label_weights(annotation: &AnnotationRecord, vocab: &AnswerVocab) -> Vec<(usize, f64)> {
    let mut weights: Vec<(usize, f64)> = annotation
        .answer_counts()
        .into_iter()
        .filter_map(|(a, x)| vocab.index_of(a).map(|k| (k, accuracy_from_count(x))))
        .collect();
    weights.sort_by_key(|(k, _)| *k);
    weights
}

/// Target distribution proportional to the VQA accuracy of each class.
/// Out-of-vocabulary answers are dropped before normalizing.
pub fn soft_label(annotation: &AnnotationRecord, vocab: &AnswerVocab) -> SoftLabel {
    let weights = soft_label_weights(annotation, vocab);
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if weights.is_empty() {
        return SoftLabel {
            question_id: annotation.question_id,
            entries: Vec::new(),
            fully_oov: true,
        };
    }
    SoftLabel {
        question_id: annotation.question_id,
        entries: weights.into_iter().map(|(k, w)| (k, w / total)).collect(),
        fully_oov: false,
    }
}

/// Writes soft labels as JSON lines, one label per question.
pub fn write_soft_labels(path: impl AsRef<Path>, labels: &[SoftLabel]) -> Result<()> {
    let path = path.as_ref();
    let mut out = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for label in labels {
        let line = serde_json::to_string(label).map_err(|e| Error::parse(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_soft_labels(path: impl AsRef<Path>) -> Result<BTreeMap<QuestionId, SoftLabel>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let label: SoftLabel = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        let qid = label.question_id;
        if out.insert(qid, label).is_some() {
            return Err(Error::DuplicateQuestion(qid));
        }
    }
    Ok(out)
}

/// Answers a generative model may be trained towards for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPool {
    pub question_id: QuestionId,
    /// Distinct answers given by at least two annotators, sorted.
    pub eligible: Vec<String>,
    pub discarded: bool,
}

/// Minimum annotator agreement for an answer to be a generation target.
pub const MIN_TARGET_ANNOTATORS: usize = 2;

pub fn select_generative_targets(annotation: &AnnotationRecord) -> TargetPool {
    let eligible: Vec<String> = annotation
        .answer_counts()
        .into_iter()
        .filter(|(a, x)| !a.is_empty() && *x >= MIN_TARGET_ANNOTATORS)
        .map(|(a, _)| a.to_string())
        .collect();
    TargetPool {
        question_id: annotation.question_id,
        discarded: eligible.is_empty(),
        eligible,
    }
}

/// Uniform draw from the eligible answers, fixed by `(question_id, epoch, seed)`.
pub fn sample_target(pool: &TargetPool, epoch: u64, seed: u64) -> Result<&str> {
    if pool.discarded || pool.eligible.is_empty() {
        return Err(Error::Precondition(format!(
            "question {} has no eligible generation target",
            pool.question_id
        )));
    }
    let mut rng = rng_for(seed, &[STREAM_TARGET, pool.question_id.0, epoch]);
    Ok(&pool.eligible[rng.random_range(0..pool.eligible.len())])
}
