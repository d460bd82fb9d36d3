//! Choosing the number of training steps on a held-out validation split.
//!
//! Each seed trains up to `max_steps` on the same train part of a split,
//! scoring the validation part every `eval_interval` steps and after the last
//! step. The earliest step with the best score wins; the result is the
//! rounded mean over seeds.

use serde::{Deserialize, Serialize};

use crate::dataset::{split_validation, AnnotationRecord, ExampleSet};
use crate::error::{Error, Result};
use crate::harness::config::{ClassifierKind, RunConfig};
use crate::harness::run::{predict_answers, RunData};
use crate::metrics::{evaluate_predictions, AccuracyMode};
use crate::modeling::adapters::ClassifierInput;
use crate::modeling::toy::{classifier_inputs, ToyTrainer};
use crate::vocab::AnswerVocab;

/// A training run that can be advanced one step at a time and scored.
pub trait TrainingSession {
    fn step(&mut self) -> Result<()>;
    fn validation_score(&mut self) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestStep {
    pub seed: u64,
    pub step: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSelection {
    pub per_seed: Vec<BestStep>,
    pub selected: usize,
}

/// Steps after which validation is scored.
pub fn checkpoints(max_steps: usize, interval: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=max_steps / interval).map(|k| k * interval).collect();
    if out.last() != Some(&max_steps) {
        out.push(max_steps);
    }
    out
}

/// Trains one session to `max_steps`, returning the earliest best checkpoint.
pub fn best_step(
    session: &mut dyn TrainingSession,
    max_steps: usize,
    interval: usize,
) -> Result<(usize, f64)> {
    let mut done = 0;
    let mut best: Option<(usize, f64)> = None;
    for at in checkpoints(max_steps, interval) {
        while done < at {
            session.step()?;
            done += 1;
        }
        let score = session.validation_score()?;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((at, score));
        }
    }
    Ok(best.expect("at least one checkpoint"))
}

/// Runs `best_step` for every seed and averages the winning steps.
pub fn select_steps_with<'s>(
    seeds: &[u64],
    max_steps: usize,
    interval: usize,
    mut make_session: impl FnMut(u64) -> Result<Box<dyn TrainingSession + 's>>,
) -> Result<StepSelection> {
    if max_steps == 0 || interval == 0 {
        return Err(Error::Config("max_steps and the eval interval must be positive".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("step selection needs at least one seed".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut session = make_session(seed)?;
        let (step, score) = best_step(session.as_mut(), max_steps, interval)?;
        log::info!("seed {seed}: best validation score {score:.4} at step {step}");
        per_seed.push(BestStep { seed, step, score });
    }
    let mean = per_seed.iter().map(|b| b.step as f64).sum::<f64>() / per_seed.len() as f64;
    let selected = (mean.round() as usize).clamp(1, max_steps);
    Ok(StepSelection { per_seed, selected })
}

struct ToySession<'a> {
    trainer: ToyTrainer,
    inputs: Vec<ClassifierInput>,
    annotations: &'a [AnnotationRecord],
    vocab: &'a AnswerVocab,
    accuracy: AccuracyMode,
}

impl TrainingSession for ToySession<'_> {
    fn step(&mut self) -> Result<()> {
        self.trainer.step().map(drop)
    }

    fn validation_score(&mut self) -> Result<f64> {
        let preds = predict_answers(self.trainer.model(), self.vocab, &self.inputs)?;
        Ok(evaluate_predictions(&preds, self.annotations, self.accuracy)?.mean_score)
    }
}

/// Step selection for the toy classifier on the training data of `config`.
/// The split is shared by all seeds and drawn with `selection.split_seed`.
pub fn select_training_steps(config: &RunConfig, max_steps: usize) -> Result<StepSelection> {
    config.validate()?;
    if config.adapters.classifier_kind()? != ClassifierKind::Toy {
        return Err(Error::Config("step selection needs a trainable classifier".into()));
    }
    config.check_paths()?;
    let data = RunData::load(config)?;
    let full = data.train_set(config, config.selection.split_seed)?;
    let (train, val) = split_for_selection(config, &full)?;
    let val_annotations = val.annotations();
    let inputs = classifier_inputs(&val, &data.regions)?;
    let mut train_config = config.train_config(0);
    train_config.steps = max_steps;
    select_steps_with(&config.seeds, max_steps, config.selection.eval_interval, |seed| {
        let cfg = crate::modeling::toy::TrainConfig {
            seed,
            ..train_config.clone()
        };
        Ok(Box::new(ToySession {
            trainer: ToyTrainer::new(&train, &data.vocab, &data.regions, &cfg, data.init.clone())?,
            inputs: inputs.clone(),
            annotations: &val_annotations,
            vocab: &data.vocab,
            accuracy: config.accuracy,
        }))
    })
}

fn split_for_selection(config: &RunConfig, full: &ExampleSet) -> Result<(ExampleSet, ExampleSet)> {
    if full.is_empty() {
        return Err(Error::Config("no training examples to split".into()));
    }
    let (train, val) = split_validation(full, config.selection.validation_fraction, config.selection.split_seed)?;
    if val.is_empty() || train.is_empty() {
        return Err(Error::Config(format!(
            "validation fraction {} of {} examples leaves an empty split",
            config.selection.validation_fraction,
            full.len()
        )));
    }
    Ok((train, val))
}
