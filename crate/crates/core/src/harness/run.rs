//! End-to-end runs: load, train per seed, predict, score, aggregate.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    index_generated_captions, join_examples, load_annotations, load_captions, load_questions,
    select_gold_captions, AnnotationRecord, CaptionMap, CaptionRecord, CaptionSource, ExampleSet,
    ImageId, QuestionRecord, Split,
};
use crate::error::{Error, Result};
use crate::harness::config::{ClassifierKind, RunConfig};
use crate::harness::predictions::{write_predictions, Predictions};
use crate::metrics::{aggregate_runs, evaluate_predictions, write_report, EvalReport, RunAggregate};
use crate::modeling::adapters::{
    AnswerClassifier, ClassifierInput, ConstantClassifier, DistributionDump, QuestionDistribution,
};
use crate::modeling::multimodal::load_region_dir;
use crate::modeling::toy::{classifier_inputs, train_toy_classifier, RegionMap, ToyModel};
use crate::vocab::{build_answer_vocab, AnswerVocab, VocabCutoff};

/// Answers by vocabulary lookup of each distribution's argmax.
pub fn predict_answers(
    classifier: &dyn AnswerClassifier,
    vocab: &AnswerVocab,
    inputs: &[ClassifierInput],
) -> Result<Predictions> {
    if classifier.n_label() != vocab.n_label() {
        return Err(Error::Config(format!(
            "{} predicts {} classes, vocabulary has {}",
            classifier.name(),
            classifier.n_label(),
            vocab.n_label()
        )));
    }
    inputs
        .par_iter()
        .map(|input| {
            let p = classifier.classify(input)?;
            Ok((input.question_id, vocab.answer(p.argmax()).expect("in range").to_string()))
        })
        .collect()
}

pub fn predict_distributions(
    classifier: &dyn AnswerClassifier,
    inputs: &[ClassifierInput],
) -> Result<DistributionDump> {
    let distributions = inputs
        .par_iter()
        .map(|input| {
            Ok(QuestionDistribution {
                question_id: input.question_id,
                probs: classifier.classify(input)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistributionDump {
        model: classifier.name().to_string(),
        n_label: classifier.n_label(),
        distributions,
    })
}

/// Everything a run reads from disk, loaded once and shared by all seeds.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train_questions: Vec<QuestionRecord>,
    pub train_annotations: Vec<AnnotationRecord>,
    pub eval_questions: Vec<QuestionRecord>,
    pub eval_annotations: Vec<AnnotationRecord>,
    pub train_captions: Vec<CaptionRecord>,
    pub eval_captions: Vec<CaptionRecord>,
    pub vocab: AnswerVocab,
    pub regions: RegionMap,
    pub init: Option<ToyModel>,
}

impl RunData {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let d = &config.data;
        let train_questions = load_questions(&d.train_questions)?;
        let train_annotations = load_annotations(&d.train_annotations)?;
        let eval_questions = load_questions(&d.eval_questions)?;
        let eval_annotations = load_annotations(&d.eval_annotations)?;
        let caps = |p: &Option<PathBuf>| p.as_ref().map_or(Ok(Vec::new()), load_captions);
        let train_captions = caps(&d.train_captions)?;
        let eval_captions = caps(&d.eval_captions)?;
        let vocab = match &d.vocab {
            Some(p) => AnswerVocab::load(p)?,
            None => build_answer_vocab(
                &train_annotations,
                VocabCutoff::from_options(d.vocab_min_count, d.vocab_max_size)?,
            )?,
        };
        let regions = match (&d.regions_dir, config.mode.uses_regions()) {
            (Some(dir), true) => {
                let images: BTreeSet<ImageId> = train_questions
                    .iter()
                    .chain(&eval_questions)
                    .map(|q| q.image_id)
                    .collect();
                load_region_dir(dir, &images)?
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(v)))
                    .collect()
            }
            _ => RegionMap::new(),
        };
        let init = d.init_checkpoint.as_ref().map(ToyModel::load).transpose()?;
        Ok(Self {
            train_questions,
            train_annotations,
            eval_questions,
            eval_annotations,
            train_captions,
            eval_captions,
            vocab,
            regions,
            init,
        })
    }

    fn captions(&self, config: &RunConfig, records: &[CaptionRecord], seed: u64) -> Result<CaptionMap> {
        if !config.mode.uses_caption() {
            return Ok(CaptionMap::new());
        }
        match config.data.caption_source {
            CaptionSource::Generated => index_generated_captions(records),
            CaptionSource::Gold => select_gold_captions(records, seed, config.data.gold_policy),
        }
    }

    /// Training examples; gold captions are drawn with `caption_seed`.
    pub fn train_set(&self, config: &RunConfig, caption_seed: u64) -> Result<ExampleSet> {
        let caps = self.captions(config, &self.train_captions, caption_seed)?;
        join_examples(&self.train_questions, &self.train_annotations, &caps, config.mode, Split::Train)
    }

    pub fn eval_set(&self, config: &RunConfig, caption_seed: u64) -> Result<ExampleSet> {
        let caps = self.captions(config, &self.eval_captions, caption_seed)?;
        join_examples(&self.eval_questions, &self.eval_annotations, &caps, config.mode, Split::Test)
    }
}

/// One trained model evaluated under one caption selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// Set when gold captions are re-drawn for evaluation.
    pub eval_caption_seed: Option<u64>,
    pub predictions_path: PathBuf,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    /// The config as run; saved as `config.toml` in the run directory.
    pub config: RunConfig,
    pub runs: Vec<SeedRun>,
    pub aggregate: RunAggregate,
}

pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const AGGREGATE_FILE: &str = "aggregate.json";
/// Per-seed trained model, usable as `init_checkpoint` of a follow-up run.
pub const CHECKPOINT_FILE: &str = "model.json";

fn build_classifier(
    config: &RunConfig,
    data: &RunData,
    train: &ExampleSet,
    seed: u64,
    seed_dir: &Path,
) -> Result<Box<dyn AnswerClassifier>> {
    match config.adapters.classifier_kind()? {
        ClassifierKind::Toy => {
            let outcome = train_toy_classifier(
                train,
                &data.vocab,
                &data.regions,
                &config.train_config(seed),
                data.init.clone(),
            )?;
            log::info!(
                "seed {seed}: final batch loss {:.4}",
                outcome.losses.last().copied().unwrap_or(f64::NAN)
            );
            outcome.model.save(seed_dir.join(CHECKPOINT_FILE))?;
            Ok(Box::new(outcome.model))
        }
        ClassifierKind::Constant(answer) => {
            let idx = data.vocab.index_of(&answer).ok_or_else(|| {
                Error::Config(format!("constant answer {answer:?} is not in the vocabulary"))
            })?;
            Ok(Box::new(ConstantClassifier::new(&config.adapters.classifier, data.vocab.n_label(), idx)?))
        }
    }
}

fn run_seed(config: &RunConfig, data: &RunData, seed: u64, run_dir: &Path) -> Result<Vec<SeedRun>> {
    let train = data.train_set(config, seed)?;
    let seed_dir = run_dir.join(format!("seed-{seed}"));
    fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
    let classifier = build_classifier(config, data, &train, seed, &seed_dir)?;

    let eval_seeds: Vec<Option<u64>> =
        if config.mode.uses_caption() && config.data.caption_source == CaptionSource::Gold && !config.data.eval_caption_seeds.is_empty() {
            config.data.eval_caption_seeds.iter().map(|&s| Some(s)).collect()
        } else {
            vec![None]
        };

    let mut runs = Vec::with_capacity(eval_seeds.len());
    for eval_seed in eval_seeds {
        let eval = data.eval_set(config, eval_seed.unwrap_or(seed))?;
        let inputs = classifier_inputs(&eval, &data.regions)?;
        let dump = predict_distributions(classifier.as_ref(), &inputs)?;
        let predictions: Predictions = dump
            .distributions
            .iter()
            .map(|d| (d.question_id, data.vocab.answer(d.probs.argmax()).expect("in range").to_string()))
            .collect();
        let report = evaluate_predictions(&predictions, &data.eval_annotations, config.accuracy)?;
        let stem = match eval_seed {
            Some(s) => format!("captions-{s}-"),
            None => String::new(),
        };
        let predictions_path = seed_dir.join(format!("{stem}predictions.json"));
        write_predictions(&predictions, &predictions_path)?;
        dump.save(seed_dir.join(format!("{stem}distributions.json")))?;
        write_report(seed_dir.join(format!("{stem}report.json")), &report)?;
        log::info!("seed {seed}: VQA score {:.4}", report.mean_score);
        runs.push(SeedRun {
            seed,
            eval_caption_seed: eval_seed,
            predictions_path,
            report,
        });
    }
    Ok(runs)
}

/// Runs every seed of `config` and writes all artifacts under
/// `out_root/<name>-<config hash>`. Dataset paths are checked first.
pub fn run_experiment(config: &RunConfig, out_root: &Path) -> Result<RunArtifacts> {
    config.validate()?;
    config.check_paths()?;
    let data = RunData::load(config)?;
    run_experiment_with(config, &data, out_root)
}

pub fn run_experiment_with(config: &RunConfig, data: &RunData, out_root: &Path) -> Result<RunArtifacts> {
    let run_dir = out_root.join(config.run_dir_name());
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    config.save(run_dir.join(CONFIG_SNAPSHOT))?;

    let per_seed = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, data, seed, &run_dir))
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<SeedRun> = per_seed.into_iter().flatten().collect();
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let aggregate = aggregate_runs(&reports)?;
    let path = run_dir.join(AGGREGATE_FILE);
    let body = serde_json::to_string_pretty(&aggregate).expect("aggregate serializes");
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(RunArtifacts {
        run_dir,
        config: config.clone(),
        runs,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_captions;
    use crate::harness::config::RunConfig;
    use crate::harness::predictions::read_predictions;
    use crate::synthetic::write_fixture;

    fn fixture_config(dir: &Path) -> RunConfig {
        let mut c = RunConfig::preset("toy").unwrap();
        c.steps = 150;
        c.batch_size = 8;
        c.learning_rate = 0.02;
        c.hidden_dim = 16;
        c.init_std = 0.1;
        write_fixture(dir, &mut c.data, 20).unwrap();
        c.data.vocab_min_count = Some(1);
        c
    }

    #[test]
    fn three_seed_run_is_structured_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let c = fixture_config(dir.path());
        let out = dir.path().join("runs");
        let a = run_experiment(&c, &out).unwrap();
        assert_eq!(a.runs.len(), 3);
        assert_eq!(a.aggregate.run_scores.len(), 3);
        assert!(a.aggregate.std >= 0.0);
        assert!(a.run_dir.ends_with(c.run_dir_name()));
        let p = read_predictions(&a.runs[0].predictions_path).unwrap();
        assert_eq!(p.len(), 20);

        let b = run_experiment(&c, &dir.path().join("again")).unwrap();
        assert_eq!(a.aggregate, b.aggregate);

        // The snapshot replays to the same directory name and results.
        let snap = RunConfig::load(a.run_dir.join(CONFIG_SNAPSHOT)).unwrap();
        assert_eq!(snap, c);
        let r = run_experiment(&snap, &dir.path().join("replay")).unwrap();
        assert_eq!(r.run_dir.file_name(), a.run_dir.file_name());
        assert_eq!(r.runs, b.runs.iter().map(|x| SeedRun {
            predictions_path: r.run_dir.join(x.predictions_path.strip_prefix(&b.run_dir).unwrap()),
            ..x.clone()
        }).collect::<Vec<_>>());
    }

    #[test]
    fn single_seed_has_zero_std() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = fixture_config(dir.path());
        c.seeds = vec![7];
        c.adapters.classifier = "constant:cat".into();
        let a = run_experiment(&c, dir.path()).unwrap();
        assert_eq!(a.aggregate.std, 0.0);
    }

    #[test]
    fn missing_dataset_fails_before_training() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = fixture_config(dir.path());
        c.data.eval_annotations = dir.path().join("nope.json");
        let out = dir.path().join("runs");
        assert!(matches!(run_experiment(&c, &out), Err(Error::Io { .. })));
        assert!(!out.exists());
    }

    #[test]
    fn gold_captions_evaluated_per_selection() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = fixture_config(dir.path());
        let gold = |path: &Path| {
            let recs: Vec<CaptionRecord> = load_captions(path)
                .unwrap()
                .into_iter()
                .flat_map(|g| {
                    (0..5).map(move |i| CaptionRecord::gold(g.image_id.0, format!("{} v{i}", g.text), i).unwrap())
                })
                .collect();
            write_captions(path, &recs).unwrap();
        };
        gold(c.data.train_captions.as_ref().unwrap());
        gold(c.data.eval_captions.as_ref().unwrap());
        c.data.caption_source = CaptionSource::Gold;
        c.data.eval_caption_seeds = vec![10, 11, 12];
        c.seeds = vec![0, 1];
        c.steps = 20;
        let a = run_experiment(&c, dir.path()).unwrap();
        assert_eq!(a.runs.len(), 6);
        assert_eq!(a.aggregate.run_scores.len(), 6);
    }
}
