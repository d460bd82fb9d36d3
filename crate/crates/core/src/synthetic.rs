//! Small synthetic corpora for smoke runs, benches and tests.
//!
//! Each image shows one object named in its caption; the crowd answers name
//! that object seven times, so a model that reads the caption can score 1.

use std::path::Path;

use serde_json::json;

use crate::dataset::{AnnotationRecord, CaptionRecord, QuestionRecord};
use crate::error::{Error, Result};
use crate::harness::config::DataConfig;

pub const OBJECTS: &[&str] = &[
    "cat", "dog", "horse", "zebra", "bus", "pizza", "boat", "kite", "train", "giraffe",
];
const SCENES: &[&str] = &["park", "street", "beach", "kitchen", "field"];
const QUESTIONS: &[&str] = &[
    "what is shown in this picture?",
    "what is in the image?",
    "what can you see here?",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub questions: Vec<QuestionRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub captions: Vec<CaptionRecord>,
}

/// `n` questions on images `1..=n`, question ids starting at `first_qid`.
pub fn memorization_corpus(n: usize, first_qid: u64) -> SyntheticCorpus {
    let mut corpus = SyntheticCorpus {
        questions: Vec::with_capacity(n),
        annotations: Vec::with_capacity(n),
        captions: Vec::with_capacity(n),
    };
    for i in 0..n {
        let img = i as u64 + 1;
        let qid = first_qid + i as u64;
        let object = OBJECTS[i % OBJECTS.len()];
        let other = OBJECTS[(i + 3) % OBJECTS.len()];
        let scene = SCENES[(i / OBJECTS.len()) % SCENES.len()];
        let mut answers = vec![object; 7];
        answers.extend([scene, scene, other]);
        corpus
            .questions
            .push(QuestionRecord::new(qid, img, QUESTIONS[i % QUESTIONS.len()]).expect("non-empty"));
        corpus
            .annotations
            .push(AnnotationRecord::new(qid, img, &answers).expect("ten answers"));
        corpus.captions.push(
            CaptionRecord::generated(img, format!("a {object} in the {scene}")).expect("non-empty"),
        );
    }
    corpus
}

impl SyntheticCorpus {
    /// Writes the three documents as `{stem}_questions.json`,
    /// `{stem}_annotations.json` and `{stem}_captions.json` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<[std::path::PathBuf; 3]> {
        let q = dir.join(format!("{stem}_questions.json"));
        let a = dir.join(format!("{stem}_annotations.json"));
        let c = dir.join(format!("{stem}_captions.json"));
        let questions = json!({ "questions": self.questions });
        let annotations = json!({
            "annotations": self.annotations.iter().map(|r| json!({
                "question_id": r.question_id,
                "image_id": r.image_id,
                "answers": r.answers().iter().map(|s| json!({ "answer": s })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>()
        });
        for (path, doc) in [(&q, questions), (&a, annotations)] {
            std::fs::write(path, doc.to_string()).map_err(|e| Error::io(path, e))?;
        }
        crate::dataset::write_captions(&c, &self.captions)?;
        Ok([q, a, c])
    }
}

/// Writes a train corpus and an eval corpus over the same images (new
/// question ids) and points `data` at them.
pub fn write_fixture(dir: &Path, data: &mut DataConfig, n: usize) -> Result<()> {
    let [tq, ta, tc] = memorization_corpus(n, 1).write(dir, "train")?;
    let [eq, ea, ec] = memorization_corpus(n, 100_001).write(dir, "eval")?;
    data.train_questions = tq;
    data.train_annotations = ta;
    data.train_captions = Some(tc);
    data.eval_questions = eq;
    data.eval_annotations = ea;
    data.eval_captions = Some(ec);
    Ok(())
}
