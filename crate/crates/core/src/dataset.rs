//! VQA-style dataset documents: questions, annotations and captions.
//!
//! Questions and annotations follow the public VQA layout, two JSON documents
//! keyed by `question_id`:
//!
//! ```text
//! {"questions":   [{"question_id": 1, "image_id": 9, "question": "what is this?"}, ...]}
//! {"annotations": [{"question_id": 1, "image_id": 9, "answers": [{"answer": "dog"}, ...]}, ...]}
//! ```
//!
//! Answers may also be given as plain strings. Extra keys are ignored, so the
//! official VQA 2.0 and OK-VQA dumps load unchanged. Captions live in a third
//! document keyed by `image_id`:
//!
//! ```text
//! {"captions": [{"image_id": 9, "caption": "a dog on a sofa", "source": "generated"},
//!               {"image_id": 9, "caption": "...", "source": "gold", "gold_index": 2}]}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metrics::normalize_answer;
use crate::modeling::input::{format_pair_input, InputStyle, SerializedInput};
use crate::seeding::{rng_for, STREAM_GOLD_CAPTION, STREAM_SPLIT};

/// Number of crowd answers attached to every question.
pub const ANSWERS_PER_QUESTION: usize = 10;
/// Number of human captions per COCO image.
pub const GOLD_CAPTIONS_PER_IMAGE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub u64);

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: QuestionId,
    pub image_id: ImageId,
    #[serde(rename = "question")]
    pub text: String,
}

impl QuestionRecord {
    pub fn new(question_id: u64, image_id: u64, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "question {question_id} has empty text"
            )));
        }
        Ok(Self {
            question_id: QuestionId(question_id),
            image_id: ImageId(image_id),
            text,
        })
    }
}

/// A question's ten crowd answers, normalized at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub question_id: QuestionId,
    pub image_id: ImageId,
    answers: Vec<String>,
}

impl AnnotationRecord {
    pub fn new<S: AsRef<str>>(question_id: u64, image_id: u64, answers: &[S]) -> Result<Self> {
        if answers.len() != ANSWERS_PER_QUESTION {
            return Err(Error::AnswerCount {
                question_id: QuestionId(question_id),
                found: answers.len(),
            });
        }
        Ok(Self {
            question_id: QuestionId(question_id),
            image_id: ImageId(image_id),
            answers: answers.iter().map(|a| normalize_answer(a.as_ref())).collect(),
        })
    }

    /// The normalized answers, in file order.
    pub fn answers(&self) -> &[String] {
        &self.answers
    }

    /// Occurrences of each normalized answer. Counts always sum to 10.
    pub fn answer_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.answers {
            *counts.entry(a.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    #[default]
    Generated,
    Gold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: ImageId,
    #[serde(rename = "caption")]
    pub text: String,
    pub source: CaptionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_index: Option<usize>,
}

impl CaptionRecord {
    pub fn generated(image_id: u64, text: impl Into<String>) -> Result<Self> {
        let rec = Self {
            image_id: ImageId(image_id),
            text: text.into(),
            source: CaptionSource::Generated,
            gold_index: None,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn gold(image_id: u64, text: impl Into<String>, gold_index: usize) -> Result<Self> {
        let rec = Self {
            image_id: ImageId(image_id),
            text: text.into(),
            source: CaptionSource::Gold,
            gold_index: Some(gold_index),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "caption for image {} is empty",
                self.image_id
            )));
        }
        match (self.source, self.gold_index) {
            (CaptionSource::Generated, None) => Ok(()),
            (CaptionSource::Gold, Some(i)) if i < GOLD_CAPTIONS_PER_IMAGE => Ok(()),
            (source, idx) => Err(Error::Validation(format!(
                "caption for image {}: source {source:?} with gold_index {idx:?}",
                self.image_id
            ))),
        }
    }
}

/// Which inputs a model sees. Early fusion reuses the caption join and adds
/// region features downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Caption,
    QuestionOnly,
    Multimodal,
    EarlyFusion,
}

impl InputMode {
    pub fn uses_caption(self) -> bool {
        matches!(self, InputMode::Caption | InputMode::EarlyFusion)
    }

    pub fn uses_regions(self) -> bool {
        matches!(self, InputMode::Multimodal | InputMode::EarlyFusion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub question: QuestionRecord,
    pub annotation: AnnotationRecord,
    pub caption: Option<CaptionRecord>,
}

impl Example {
    pub fn question_id(&self) -> QuestionId {
        self.question.question_id
    }

    pub fn image_id(&self) -> ImageId {
        self.question.image_id
    }

    /// The text a language model receives for this example.
    pub fn model_input(&self, style: InputStyle) -> SerializedInput {
        format_pair_input(
            self.caption.as_ref().map(|c| c.text.as_str()),
            &self.question.text,
            style,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    pub split: Split,
    pub mode: InputMode,
    pub examples: Vec<Example>,
}

impl ExampleSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn question_ids(&self) -> BTreeSet<QuestionId> {
        self.examples.iter().map(Example::question_id).collect()
    }

    pub fn image_ids(&self) -> BTreeSet<ImageId> {
        self.examples.iter().map(Example::image_id).collect()
    }

    pub fn annotations(&self) -> Vec<AnnotationRecord> {
        self.examples.iter().map(|e| e.annotation.clone()).collect()
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))
}

fn records<'a>(path: &Path, doc: &'a Value, key: &str) -> Result<&'a Vec<Value>> {
    doc.get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(path, format!("missing top-level `{key}` array")))
}

fn record_error(path: &Path, index: usize, rec: &Value, err: impl fmt::Display) -> Error {
    let id = rec
        .get("question_id")
        .or_else(|| rec.get("image_id"))
        .map(|v| format!(" ({v})"))
        .unwrap_or_default();
    Error::parse(path, format!("record #{index}{id}: {err}"))
}

pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<QuestionRecord>> {
    #[derive(Deserialize)]
    struct Raw {
        question_id: u64,
        image_id: u64,
        question: String,
    }

    let path = path.as_ref();
    let doc = read_json(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in records(path, &doc, "questions")?.iter().enumerate() {
        let raw = Raw::deserialize(rec).map_err(|e| record_error(path, i, rec, e))?;
        let q = QuestionRecord::new(raw.question_id, raw.image_id, raw.question)?;
        if !seen.insert(q.question_id) {
            return Err(Error::DuplicateQuestion(q.question_id));
        }
        out.push(q);
    }
    log::debug!("{}: {} questions", path.display(), out.len());
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum RawAnswer {
        Plain(String),
        Object { answer: String },
    }

    #[derive(Deserialize)]
    struct Raw {
        question_id: u64,
        image_id: u64,
        answers: Vec<RawAnswer>,
    }

    let path = path.as_ref();
    let doc = read_json(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in records(path, &doc, "annotations")?.iter().enumerate() {
        let raw = Raw::deserialize(rec).map_err(|e| record_error(path, i, rec, e))?;
        let answers: Vec<String> = raw
            .answers
            .into_iter()
            .map(|a| match a {
                RawAnswer::Plain(s) | RawAnswer::Object { answer: s } => s,
            })
            .collect();
        let ann = AnnotationRecord::new(raw.question_id, raw.image_id, &answers)?;
        if !seen.insert(ann.question_id) {
            return Err(Error::DuplicateQuestion(ann.question_id));
        }
        out.push(ann);
    }
    log::debug!("{}: {} annotations", path.display(), out.len());
    Ok(out)
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    let path = path.as_ref();
    let doc = read_json(path)?;
    records(path, &doc, "captions")?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let c = CaptionRecord::deserialize(rec).map_err(|e| record_error(path, i, rec, e))?;
            c.validate()?;
            Ok(c)
        })
        .collect()
}

pub fn write_captions(path: impl AsRef<Path>, captions: &[CaptionRecord]) -> Result<()> {
    let path = path.as_ref();
    let doc = serde_json::json!({ "captions": captions });
    let body = serde_json::to_string_pretty(&doc).map_err(|e| Error::parse(path, e))?;
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Loads a COCO captions document (`{"annotations": [{"image_id", "id", "caption"}]}`)
/// into per-image gold caption lists ordered by annotation id.
pub fn load_coco_gold_captions(path: impl AsRef<Path>) -> Result<BTreeMap<ImageId, Vec<String>>> {
    #[derive(Deserialize)]
    struct Raw {
        image_id: u64,
        #[serde(default)]
        id: u64,
        caption: String,
    }

    let path = path.as_ref();
    let doc = read_json(path)?;
    let mut by_image: BTreeMap<ImageId, Vec<(u64, String)>> = BTreeMap::new();
    for (i, rec) in records(path, &doc, "annotations")?.iter().enumerate() {
        let raw = Raw::deserialize(rec).map_err(|e| record_error(path, i, rec, e))?;
        by_image
            .entry(ImageId(raw.image_id))
            .or_default()
            .push((raw.id, raw.caption.trim().to_string()));
    }
    Ok(by_image
        .into_iter()
        .map(|(img, mut caps)| {
            caps.sort_by_key(|(id, _)| *id);
            (img, caps.into_iter().map(|(_, c)| c).collect())
        })
        .collect())
}

/// How strictly [`select_gold_caption`] checks the number of gold captions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldCaptionPolicy {
    /// Exactly five captions, or more of which the first five are used.
    #[default]
    RequireFive,
    /// Accept any non-empty list, logging a warning when short.
    AcceptAny,
}

/// Picks one gold caption for an image. The choice depends only on
/// `(image_id, seed)`, so a run keeps the same caption for an image throughout.
pub fn select_gold_caption<S: AsRef<str>>(
    image_id: ImageId,
    gold_captions: &[S],
    seed: u64,
    policy: GoldCaptionPolicy,
) -> Result<CaptionRecord> {
    let n = gold_captions.len();
    if n < GOLD_CAPTIONS_PER_IMAGE {
        if policy == GoldCaptionPolicy::RequireFive || n == 0 {
            return Err(Error::Validation(format!(
                "image {image_id} has {n} gold captions, expected {GOLD_CAPTIONS_PER_IMAGE}"
            )));
        }
        log::warn!("image {image_id} has only {n} gold captions");
    }
    let pool = n.min(GOLD_CAPTIONS_PER_IMAGE);
    let idx = rng_for(seed, &[STREAM_GOLD_CAPTION, image_id.0]).random_range(0..pool);
    CaptionRecord::gold(image_id.0, gold_captions[idx].as_ref(), idx)
}

/// One caption per image, ready for [`join_examples`].
pub type CaptionMap = BTreeMap<ImageId, CaptionRecord>;

/// Indexes generated captions by image. An image with two generated captions
/// is ambiguous and rejected.
pub fn index_generated_captions(captions: &[CaptionRecord]) -> Result<CaptionMap> {
    let mut map = CaptionMap::new();
    for c in captions {
        if c.source != CaptionSource::Generated {
            continue;
        }
        if map.insert(c.image_id, c.clone()).is_some() {
            return Err(Error::Validation(format!(
                "image {} has more than one generated caption",
                c.image_id
            )));
        }
    }
    Ok(map)
}

/// Chooses one gold caption per image with [`select_gold_caption`].
pub fn select_gold_captions(
    captions: &[CaptionRecord],
    seed: u64,
    policy: GoldCaptionPolicy,
) -> Result<CaptionMap> {
    let mut grouped: BTreeMap<ImageId, Vec<(usize, &str)>> = BTreeMap::new();
    for c in captions.iter().filter(|c| c.source == CaptionSource::Gold) {
        grouped
            .entry(c.image_id)
            .or_default()
            .push((c.gold_index.unwrap_or(0), c.text.as_str()));
    }
    grouped
        .into_iter()
        .map(|(img, mut caps)| {
            caps.sort_by_key(|(i, _)| *i);
            let texts: Vec<&str> = caps.into_iter().map(|(_, t)| t).collect();
            Ok((img, select_gold_caption(img, &texts, seed, policy)?))
        })
        .collect()
}

/// Joins questions with their annotations and, in caption-consuming modes,
/// with their image's caption. Output follows the order of `questions`.
pub fn join_examples(
    questions: &[QuestionRecord],
    annotations: &[AnnotationRecord],
    captions: &CaptionMap,
    mode: InputMode,
    split: Split,
) -> Result<ExampleSet> {
    let by_qid: HashMap<QuestionId, &AnnotationRecord> =
        annotations.iter().map(|a| (a.question_id, a)).collect();

    let missing: Vec<QuestionId> = questions
        .iter()
        .map(|q| q.question_id)
        .filter(|id| !by_qid.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAnnotations(missing));
    }

    if mode.uses_caption() {
        let missing: BTreeSet<ImageId> = questions
            .iter()
            .map(|q| q.image_id)
            .filter(|img| !captions.contains_key(img))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingCaptions(missing.into_iter().collect()));
        }
    }

    let mut examples = Vec::with_capacity(questions.len());
    for q in questions {
        let ann = by_qid[&q.question_id];
        if ann.image_id != q.image_id {
            return Err(Error::Validation(format!(
                "question {} is on image {} but its annotation names image {}",
                q.question_id, q.image_id, ann.image_id
            )));
        }
        let caption = if mode.uses_caption() {
            Some(captions[&q.image_id].clone())
        } else {
            None
        };
        examples.push(Example {
            question: q.clone(),
            annotation: ann.clone(),
            caption,
        });
    }
    Ok(ExampleSet {
        split,
        mode,
        examples,
    })
}

/// Removes reserved (evaluation) images from a caption-training image set.
pub fn decontaminate(
    caption_training_images: &BTreeSet<ImageId>,
    reserved_images: &BTreeSet<ImageId>,
) -> BTreeSet<ImageId> {
    caption_training_images
        .difference(reserved_images)
        .copied()
        .collect()
}

/// Number of validation examples carved out of `n`: `floor(fraction * n)`.
pub fn validation_size(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).floor() as usize
}

/// Holds out `floor(fraction * N)` examples as a validation split. Both halves
/// keep the input order; membership is a seeded shuffle.
pub fn split_validation(
    examples: &ExampleSet,
    fraction: f64,
    seed: u64,
) -> Result<(ExampleSet, ExampleSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "validation fraction {fraction} not in (0, 1)"
        )));
    }
    if examples.is_empty() {
        return Err(Error::Precondition("cannot split an empty example set".into()));
    }
    let n = examples.len();
    let n_val = validation_size(n, fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[STREAM_SPLIT]));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }

    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (ex, v) in examples.examples.iter().zip(is_val) {
        if v {
            val.push(ex.clone());
        } else {
            train.push(ex.clone());
        }
    }
    Ok((
        ExampleSet {
            split: examples.split,
            mode: examples.mode,
            examples: train,
        },
        ExampleSet {
            split: Split::Val,
            mode: examples.mode,
            examples: val,
        },
    ))
}

/// Split membership by question id, written next to runs so that overlap
/// between training data and reserved evaluation data can be audited.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub splits: BTreeMap<Split, BTreeSet<QuestionId>>,
}

impl SplitManifest {
    pub fn from_sets<'a>(sets: impl IntoIterator<Item = &'a ExampleSet>) -> Self {
        let mut m = SplitManifest::default();
        for set in sets {
            m.splits
                .entry(set.split)
                .or_default()
                .extend(set.question_ids());
        }
        m
    }

    /// Question ids appearing in more than one split.
    pub fn overlaps(&self) -> BTreeSet<QuestionId> {
        let mut seen = BTreeSet::new();
        let mut dup = BTreeSet::new();
        for ids in self.splits.values() {
            for id in ids {
                if !seen.insert(*id) {
                    dup.insert(*id);
                }
            }
        }
        dup
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

/// Reads an image id list: one integer per line, `#` starts a comment.
pub fn read_image_ids(path: impl AsRef<Path>) -> Result<BTreeSet<ImageId>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeSet::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let id = line
            .parse::<u64>()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        out.insert(ImageId(id));
    }
    Ok(out)
}

pub fn write_image_ids(path: impl AsRef<Path>, ids: &BTreeSet<ImageId>) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::new();
    for id in ids {
        body.push_str(&id.0.to_string());
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}
