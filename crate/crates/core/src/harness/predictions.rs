//! Prediction files: a JSON list of `{"question_id", "answer"}` records in
//! question id order, one record per line, the layout of VQA result files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::QuestionId;
use crate::error::{Error, Result};

pub type Predictions = BTreeMap<QuestionId, String>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    question_id: QuestionId,
    answer: String,
}

pub fn write_predictions(predictions: &Predictions, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("[");
    for (i, (qid, answer)) in predictions.iter().enumerate() {
        let rec = serde_json::to_string(&PredictionRecord {
            question_id: *qid,
            answer: answer.clone(),
        })
        .expect("record serializes");
        let sep = if i == 0 { "" } else { "," };
        write!(out, "{sep}\n{rec}").unwrap();
    }
    out.push_str("\n]\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Predictions> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<PredictionRecord> = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
    let mut out = Predictions::new();
    for r in records {
        if out.insert(r.question_id, r.answer).is_some() {
            return Err(Error::DuplicateQuestion(r.question_id));
        }
    }
    Ok(out)
}
