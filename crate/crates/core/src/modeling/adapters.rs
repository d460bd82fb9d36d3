//! Boundaries around external models.
//!
//! A captioner, an answer classifier and an answer generator each sit behind
//! a trait. Real pretrained models are plug-ins; the file-backed adapters
//! here replay cached outputs so the pipeline runs without them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{CaptionMap, CaptionRecord, Example, ImageId, QuestionId};
use crate::error::{Error, Result};
use crate::modeling::distribution::PredictionDistribution;
use crate::modeling::input::{format_pair_input, InputStyle, SerializedInput};
use crate::modeling::multimodal::RegionFeatureSet;

/// Everything a classifier may look at for one question. Text-only models
/// ignore `regions`; image-feature models ignore `caption` unless early-fused.
#[derive(Debug, Clone)]
pub struct ClassifierInput {
    pub question_id: QuestionId,
    pub image_id: ImageId,
    pub question: String,
    pub caption: Option<String>,
    pub regions: Option<Arc<RegionFeatureSet>>,
}

impl ClassifierInput {
    pub fn from_example(example: &Example, regions: Option<Arc<RegionFeatureSet>>) -> Self {
        Self {
            question_id: example.question_id(),
            image_id: example.image_id(),
            question: example.question.text.clone(),
            caption: example.caption.as_ref().map(|c| c.text.clone()),
            regions,
        }
    }

    pub fn serialized(&self, style: InputStyle) -> SerializedInput {
        format_pair_input(self.caption.as_deref(), &self.question, style)
    }
}

pub trait CaptionGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn caption(&self, image_id: ImageId) -> Result<CaptionRecord>;
}

/// Must be deterministic for fixed weights and return a valid distribution
/// over `n_label()` classes.
pub trait AnswerClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn n_label(&self) -> usize;
    fn classify(&self, input: &ClassifierInput) -> Result<PredictionDistribution>;
}

pub trait AnswerGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, input: &SerializedInput) -> Result<String>;
}

fn adapter_error(name: &str, message: impl Into<String>) -> Error {
    Error::Adapter {
        name: name.to_string(),
        message: message.into(),
    }
}

/// Serves captions produced earlier and stored in a caption file.
#[derive(Debug, Clone)]
pub struct CachedCaptions {
    name: String,
    captions: CaptionMap,
}

impl CachedCaptions {
    pub fn new(name: impl Into<String>, captions: CaptionMap) -> Self {
        Self {
            name: name.into(),
            captions,
        }
    }
}

impl CaptionGenerator for CachedCaptions {
    fn name(&self) -> &str {
        &self.name
    }

    fn caption(&self, image_id: ImageId) -> Result<CaptionRecord> {
        self.captions
            .get(&image_id)
            .cloned()
            .ok_or_else(|| adapter_error(&self.name, format!("no cached caption for image {image_id}")))
    }
}

/// Always puts all mass on one class.
#[derive(Debug, Clone)]
pub struct ConstantClassifier {
    name: String,
    n_label: usize,
    class: usize,
}

impl ConstantClassifier {
    pub fn new(name: impl Into<String>, n_label: usize, class: usize) -> Result<Self> {
        if class >= n_label {
            return Err(Error::Config(format!(
                "constant class {class} outside {n_label} labels"
            )));
        }
        Ok(Self {
            name: name.into(),
            n_label,
            class,
        })
    }
}

impl AnswerClassifier for ConstantClassifier {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_label(&self) -> usize {
        self.n_label
    }

    fn classify(&self, _input: &ClassifierInput) -> Result<PredictionDistribution> {
        let mut p = vec![0.0; self.n_label];
        p[self.class] = 1.0;
        PredictionDistribution::new(p)
    }
}

/// Per-question probability vectors dumped by a classifier, the input of
/// late fusion:
///
/// ```text
/// {"model": "cbm", "n_label": 3, "distributions": [{"question_id": 1, "probs": [0.2, 0.5, 0.3]}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDump {
    pub model: String,
    pub n_label: usize,
    pub distributions: Vec<QuestionDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDistribution {
    pub question_id: QuestionId,
    pub probs: PredictionDistribution,
}

impl DistributionDump {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dump: Self = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
        let mut seen = std::collections::BTreeSet::new();
        for d in &dump.distributions {
            if d.probs.len() != dump.n_label {
                return Err(Error::parse(
                    path,
                    format!("question {} has {} classes, header says {}", d.question_id, d.probs.len(), dump.n_label),
                ));
            }
            if !seen.insert(d.question_id) {
                return Err(Error::DuplicateQuestion(d.question_id));
            }
        }
        Ok(dump)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string(self).map_err(|e| Error::parse(path, e))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn by_question(&self) -> BTreeMap<QuestionId, &PredictionDistribution> {
        self.distributions.iter().map(|d| (d.question_id, &d.probs)).collect()
    }
}

/// Replays a [`DistributionDump`] as a classifier.
#[derive(Debug, Clone)]
pub struct CachedDistributions {
    name: String,
    n_label: usize,
    table: BTreeMap<QuestionId, PredictionDistribution>,
}

impl CachedDistributions {
    pub fn new(dump: DistributionDump) -> Self {
        Self {
            name: dump.model,
            n_label: dump.n_label,
            table: dump
                .distributions
                .into_iter()
                .map(|d| (d.question_id, d.probs))
                .collect(),
        }
    }
}

impl AnswerClassifier for CachedDistributions {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_label(&self) -> usize {
        self.n_label
    }

    fn classify(&self, input: &ClassifierInput) -> Result<PredictionDistribution> {
        self.table.get(&input.question_id).cloned().ok_or_else(|| {
            adapter_error(&self.name, format!("no cached distribution for question {}", input.question_id))
        })
    }
}

/// Replays generated answers keyed by the exact prompt text.
#[derive(Debug, Clone, Default)]
pub struct CachedAnswers {
    name: String,
    answers: BTreeMap<String, String>,
}

impl CachedAnswers {
    pub fn new(name: impl Into<String>, answers: BTreeMap<String, String>) -> Self {
        Self {
            name: name.into(),
            answers,
        }
    }
}

impl AnswerGenerator for CachedAnswers {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, input: &SerializedInput) -> Result<String> {
        self.answers
            .get(&input.text)
            .cloned()
            .ok_or_else(|| adapter_error(&self.name, format!("no cached answer for {:?}", input.text)))
    }
}
