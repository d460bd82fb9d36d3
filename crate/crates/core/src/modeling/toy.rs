//! A small trainable answer classifier.
//!
//! The encoder is a bag of slots: word embeddings for the text and a linear
//! projection for each image region, mean-pooled into one `d_h` vector and
//! fed to the classification head. It is trained with soft cross-entropy
//! and AdamW, entirely on the CPU and fully determined by its seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExampleSet, ImageId, InputMode};
use crate::error::{Error, Result};
use crate::modeling::adapters::{AnswerClassifier, ClassifierInput};
use crate::modeling::distribution::{softmax, PredictionDistribution};
use crate::modeling::head::{head_backward, head_trace, ClassifierHeadParams, HeadTrace};
use crate::modeling::input::{WordTokenizer, UNK_ID};
use crate::modeling::loss::{sce_gradient, LOG_CLAMP};
use crate::modeling::multimodal::{assemble_multimodal_input, RegionConfig, RegionFeatureSet};
use crate::modeling::optim::{learning_rate_at, AdamW, AdamWConfig, LrSchedule};
use crate::seeding::{rng_for, STREAM_BATCH, STREAM_INIT};
use crate::vocab::{soft_label, AnswerVocab, SoftLabel};

/// Region features by image, shared between examples of the same image.
pub type RegionMap = BTreeMap<ImageId, Arc<RegionFeatureSet>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub warmup_steps: usize,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    pub hidden_dim: usize,
    pub init_std: f64,
    pub seed: u64,
    /// Leave out questions whose answers are all out of vocabulary.
    pub skip_fully_oov: bool,
    #[serde(default)]
    pub region: RegionConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(
                "steps, batch_size and hidden_dim must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionProjection {
    /// `slot_dim × d_h`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    /// `token vocabulary × d_h`.
    pub embeddings: Array2<f64>,
    pub region_proj: Option<RegionProjection>,
    pub head: ClassifierHeadParams,
}

fn normal_matrix<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || std * rng.sample::<f64, _>(StandardNormal))
}

impl ToyParams {
    fn zeros_like(&self) -> Self {
        Self {
            embeddings: Array2::zeros(self.embeddings.raw_dim()),
            region_proj: self.region_proj.as_ref().map(|p| RegionProjection {
                weight: Array2::zeros(p.weight.raw_dim()),
                bias: Array1::zeros(p.bias.len()),
            }),
            head: ClassifierHeadParams::zeros(self.head.d_h(), self.head.n_label()),
        }
    }

    /// Tensors in a fixed order; the flag marks weight-decayed matrices.
    fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        let h = &mut self.head;
        let mut out: Vec<(&mut [f64], bool)> = vec![
            (self.embeddings.as_slice_mut().unwrap(), true),
            (h.w_hidden.as_slice_mut().unwrap(), true),
            (h.b_hidden.as_slice_mut().unwrap(), false),
            (h.ln_gamma.as_slice_mut().unwrap(), false),
            (h.ln_beta.as_slice_mut().unwrap(), false),
            (h.w_out.as_slice_mut().unwrap(), true),
            (h.b_out.as_slice_mut().unwrap(), false),
        ];
        if let Some(p) = &mut self.region_proj {
            out.push((p.weight.as_slice_mut().unwrap(), true));
            out.push((p.bias.as_slice_mut().unwrap(), false));
        }
        out
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let h = &self.head;
        let mut out = vec![
            self.embeddings.as_slice().unwrap(),
            h.w_hidden.as_slice().unwrap(),
            h.b_hidden.as_slice().unwrap(),
            h.ln_gamma.as_slice().unwrap(),
            h.ln_beta.as_slice().unwrap(),
            h.w_out.as_slice().unwrap(),
            h.b_out.as_slice().unwrap(),
        ];
        if let Some(p) = &self.region_proj {
            out.push(p.weight.as_slice().unwrap());
            out.push(p.bias.as_slice().unwrap());
        }
        out
    }

    fn scale(&mut self, factor: f64) {
        for (t, _) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// One example turned into encoder slots.
#[derive(Debug, Clone)]
struct Encoded {
    tokens: Vec<usize>,
    regions: Option<Array2<f64>>,
}

impl Encoded {
    fn n_slots(&self) -> usize {
        self.tokens.len() + self.regions.as_ref().map_or(0, |r| r.nrows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub name: String,
    pub mode: InputMode,
    pub tokenizer: WordTokenizer,
    pub vocab: AnswerVocab,
    pub region: RegionConfig,
    pub params: ToyParams,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    name: String,
    mode: InputMode,
    tokenizer: WordTokenizer,
    answers: Vec<String>,
    region: RegionConfig,
    params: ToyParams,
}

impl ToyModel {
    fn init(
        name: String,
        mode: InputMode,
        tokenizer: WordTokenizer,
        vocab: AnswerVocab,
        config: &TrainConfig,
    ) -> Self {
        let mut rng = rng_for(config.seed, &[STREAM_INIT]);
        let d_h = config.hidden_dim;
        let embeddings = normal_matrix(tokenizer.vocab_size(), d_h, config.init_std, &mut rng);
        let head = ClassifierHeadParams::init(d_h, vocab.n_label(), config.init_std, &mut rng);
        let region_proj = mode.uses_regions().then(|| RegionProjection {
            weight: normal_matrix(config.region.slot_dim(), d_h, config.init_std, &mut rng),
            bias: Array1::zeros(d_h),
        });
        Self {
            name,
            mode,
            tokenizer,
            vocab,
            region: config.region,
            params: ToyParams {
                embeddings,
                region_proj,
                head,
            },
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.head.d_h()
    }

    fn encode(&self, input: &ClassifierInput) -> Result<Encoded> {
        let caption = if self.mode.uses_caption() {
            Some(input.caption.as_deref().ok_or_else(|| {
                Error::Precondition(format!("question {} has no caption", input.question_id))
            })?)
        } else {
            None
        };
        let rows = self.params.embeddings.nrows();
        let tokens = self
            .tokenizer
            .encode_pair(caption, &input.question)
            .tokens
            .into_iter()
            .map(|t| if (t as usize) < rows { t as usize } else { UNK_ID as usize })
            .collect();
        let regions = if self.mode.uses_regions() {
            let r = input.regions.as_deref().ok_or_else(|| {
                Error::Precondition(format!("image {} has no region features", input.image_id))
            })?;
            Some(assemble_multimodal_input(&input.question, caption, r, &self.region)?.region_slots)
        } else {
            None
        };
        Ok(Encoded { tokens, regions })
    }

    fn pool(&self, enc: &Encoded) -> Array1<f64> {
        let mut acc = Array1::<f64>::zeros(self.hidden_dim());
        for &t in &enc.tokens {
            acc += &self.params.embeddings.row(t);
        }
        if let (Some(slots), Some(proj)) = (&enc.regions, &self.params.region_proj) {
            acc += &slots.dot(&proj.weight).sum_axis(ndarray::Axis(0));
            acc.scaled_add(slots.nrows() as f64, &proj.bias);
        }
        acc / enc.n_slots() as f64
    }

    fn forward(&self, enc: &Encoded) -> Result<(Array1<f64>, HeadTrace)> {
        let pooled = self.pool(enc);
        let trace = head_trace(pooled.view(), &self.params.head)?;
        Ok((pooled, trace))
    }

    /// Loss of one example; gradients are added into `grads`.
    fn accumulate(&self, enc: &Encoded, y: &SoftLabel, grads: &mut ToyParams) -> Result<f64> {
        let (pooled, trace) = self.forward(enc)?;
        let logits = trace.logits.as_slice().expect("contiguous logits");
        let d_logits = Array1::from(sce_gradient(logits, y)?);
        let probs = softmax(logits);
        let loss = -y
            .entries
            .iter()
            .map(|&(k, p)| p * probs[k].max(LOG_CLAMP).ln())
            .sum::<f64>();

        let d_pooled = head_backward(pooled.view(), &self.params.head, &trace, d_logits.view(), &mut grads.head);
        let scale = 1.0 / enc.n_slots() as f64;
        for &t in &enc.tokens {
            grads.embeddings.row_mut(t).scaled_add(scale, &d_pooled);
        }
        if let (Some(slots), Some(g)) = (&enc.regions, &mut grads.region_proj) {
            accumulate_outer(&mut g.weight, slots.sum_axis(ndarray::Axis(0)).view(), d_pooled.view(), scale);
            g.bias.scaled_add(slots.nrows() as f64 * scale, &d_pooled);
        }
        Ok(loss)
    }

    pub fn predict(&self, input: &ClassifierInput) -> Result<PredictionDistribution> {
        let enc = self.encode(input)?;
        let (_, trace) = self.forward(&enc)?;
        PredictionDistribution::from_logits(trace.logits.as_slice().expect("contiguous logits"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            name: self.name.clone(),
            mode: self.mode,
            tokenizer: self.tokenizer.clone(),
            answers: self.vocab.answers().to_vec(),
            region: self.region,
            params: self.params.clone(),
        };
        let body = serde_json::to_string(&ckpt).map_err(|e| Error::parse(path, e))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&raw).map_err(|e| Error::parse(path, e))?;
        let vocab = AnswerVocab::from_answers(ckpt.answers)?;
        ckpt.params.head.check_shapes()?;
        if ckpt.params.head.n_label() != vocab.n_label() {
            return Err(Error::parse(path, "head width does not match the stored vocabulary"));
        }
        Ok(Self {
            name: ckpt.name,
            mode: ckpt.mode,
            tokenizer: ckpt.tokenizer,
            vocab,
            region: ckpt.region,
            params: ckpt.params,
        })
    }
}

fn accumulate_outer(target: &mut Array2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>, scale: f64) {
    for (i, mut row) in target.rows_mut().into_iter().enumerate() {
        row.scaled_add(a[i] * scale, &b);
    }
}

impl AnswerClassifier for ToyModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_label(&self) -> usize {
        self.vocab.n_label()
    }

    fn classify(&self, input: &ClassifierInput) -> Result<PredictionDistribution> {
        self.predict(input)
    }
}

/// Builds classifier inputs for every example, attaching region features in
/// modes that use them.
pub fn classifier_inputs(examples: &ExampleSet, regions: &RegionMap) -> Result<Vec<ClassifierInput>> {
    examples
        .examples
        .iter()
        .map(|ex| {
            let r = if examples.mode.uses_regions() {
                Some(regions.get(&ex.image_id()).cloned().ok_or_else(|| {
                    Error::Validation(format!("no region features for image {}", ex.image_id()))
                })?)
            } else {
                None
            };
            Ok(ClassifierInput::from_example(ex, r))
        })
        .collect()
}

/// Stepwise trainer, so callers can evaluate between steps.
pub struct ToyTrainer {
    model: ToyModel,
    data: Vec<(Encoded, SoftLabel)>,
    optimizer: AdamW,
    config: TrainConfig,
    steps_done: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    losses: Vec<f64>,
}

impl ToyTrainer {
    /// `init` continues from an earlier checkpoint; its vocabulary must have
    /// the same number of labels as `vocab`.
    pub fn new(
        examples: &ExampleSet,
        vocab: &AnswerVocab,
        regions: &RegionMap,
        config: &TrainConfig,
        init: Option<ToyModel>,
    ) -> Result<Self> {
        config.validate()?;
        let name = format!("toy-{:?}", examples.mode).to_lowercase();
        let model = match init {
            Some(mut m) => {
                if m.vocab.n_label() != vocab.n_label() {
                    return Err(Error::Config(format!(
                        "checkpoint has {} labels, vocabulary has {}",
                        m.vocab.n_label(),
                        vocab.n_label()
                    )));
                }
                m.vocab = vocab.clone();
                m.mode = examples.mode;
                m.region = config.region;
                if m.mode.uses_regions() && m.params.region_proj.is_none() {
                    let mut rng = rng_for(config.seed, &[STREAM_INIT, 1]);
                    m.params.region_proj = Some(RegionProjection {
                        weight: normal_matrix(config.region.slot_dim(), m.hidden_dim(), config.init_std, &mut rng),
                        bias: Array1::zeros(m.hidden_dim()),
                    });
                }
                m
            }
            None => {
                let texts = examples.examples.iter().flat_map(|e| {
                    std::iter::once(e.question.text.as_str())
                        .chain(e.caption.as_ref().map(|c| c.text.as_str()))
                });
                let tokenizer = WordTokenizer::fit(texts);
                ToyModel::init(name, examples.mode, tokenizer, vocab.clone(), config)
            }
        };

        let inputs = classifier_inputs(examples, regions)?;
        let mut data = Vec::with_capacity(inputs.len());
        for (ex, input) in examples.examples.iter().zip(&inputs) {
            let y = soft_label(&ex.annotation, vocab);
            if y.fully_oov && config.skip_fully_oov {
                continue;
            }
            data.push((model.encode(input)?, y));
        }
        if data.is_empty() {
            return Err(Error::Precondition("no trainable examples".into()));
        }
        let sizes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
        let mut trainer = Self {
            model,
            optimizer: AdamW::new(config.optimizer, &sizes),
            config: config.clone(),
            steps_done: 0,
            order: (0..data.len()).collect(),
            data,
            cursor: 0,
            epoch: 0,
            losses: Vec::new(),
        };
        trainer.reshuffle();
        Ok(trainer)
    }

    fn reshuffle(&mut self) {
        self.order.sort_unstable();
        self.order
            .shuffle(&mut rng_for(self.config.seed, &[STREAM_BATCH, self.epoch]));
        self.cursor = 0;
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.config.batch_size);
        while batch.len() < self.config.batch_size {
            if self.cursor == self.order.len() {
                self.epoch += 1;
                self.reshuffle();
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    /// Runs one optimizer step and returns the mean batch loss.
    pub fn step(&mut self) -> Result<f64> {
        let batch = self.next_batch();
        let mut grads = self.model.params.zeros_like();
        let mut loss = 0.0;
        for &i in &batch {
            let (enc, y) = &self.data[i];
            loss += self.model.accumulate(enc, y, &mut grads)?;
        }
        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        loss *= inv;

        let lr = learning_rate_at(
            self.config.schedule,
            self.config.learning_rate,
            self.steps_done,
            self.config.steps,
            self.config.warmup_steps,
        );
        let grad_views = grads.tensors();
        self.optimizer
            .step(&mut self.model.params.tensors_mut(), &grad_views, lr);
        self.steps_done += 1;
        self.losses.push(loss);
        Ok(loss)
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            model: self.model,
            losses: self.losses,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    /// Mean batch loss after each step.
    pub losses: Vec<f64>,
}

pub fn train_toy_classifier(
    examples: &ExampleSet,
    vocab: &AnswerVocab,
    regions: &RegionMap,
    config: &TrainConfig,
    init: Option<ToyModel>,
) -> Result<TrainOutcome> {
    let mut trainer = ToyTrainer::new(examples, vocab, regions, config, init)?;
    for _ in 0..config.steps {
        trainer.step()?;
    }
    Ok(trainer.into_outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotationRecord, CaptionRecord, Example, QuestionRecord, Split};
    use crate::vocab::{build_answer_vocab, VocabCutoff};

    fn corpus(mode: InputMode) -> ExampleSet {
        let animals = ["horse", "zebra", "cat", "dog", "cow", "duck"];
        let examples = (0..12u64)
            .map(|i| {
                let a = animals[i as usize % animals.len()];
                let mut answers = vec![a; 7];
                answers.extend(["animal"; 3]);
                Example {
                    question: QuestionRecord::new(i, i, format!("what animal q{i}")).unwrap(),
                    annotation: AnnotationRecord::new(i, i, &answers).unwrap(),
                    caption: mode
                        .uses_caption()
                        .then(|| CaptionRecord::generated(i, format!("a photo of a {a}")).unwrap()),
                }
            })
            .collect();
        ExampleSet {
            split: Split::Train,
            mode,
            examples,
        }
    }

    fn regions_for(set: &ExampleSet, dim: usize) -> RegionMap {
        set.examples
            .iter()
            .map(|e| {
                let f = Array2::from_shape_fn((3, dim), |(r, c)| ((e.image_id().0 + r as u64 + c as u64) % 5) as f64 / 5.0);
                (e.image_id(), Arc::new(RegionFeatureSet::new(f, None).unwrap()))
            })
            .collect()
    }

    fn config(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 4,
            learning_rate: 0.01,
            schedule: LrSchedule::Constant,
            warmup_steps: 0,
            optimizer: AdamWConfig::default(),
            hidden_dim: 8,
            init_std: 0.2,
            seed: 3,
            skip_fully_oov: true,
            region: RegionConfig {
                feature_dim: 6,
                include_boxes: false,
            },
        }
    }

    fn vocab(set: &ExampleSet) -> AnswerVocab {
        build_answer_vocab(&set.annotations(), VocabCutoff::MaxSize(100)).unwrap()
    }

    /// Total loss over the data, recomputed through the public forward pass.
    fn data_loss(trainer: &ToyTrainer, params: &ToyParams) -> f64 {
        let mut model = trainer.model.clone();
        model.params = params.clone();
        trainer
            .data
            .iter()
            .map(|(enc, y)| {
                let (_, tr) = model.forward(enc).unwrap();
                let p = softmax(tr.logits.as_slice().unwrap());
                -y.entries.iter().map(|&(k, w)| w * p[k].ln()).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        let set = corpus(InputMode::EarlyFusion);
        let regions = regions_for(&set, 6);
        let v = vocab(&set);
        let trainer = ToyTrainer::new(&set, &v, &regions, &config(1), None).unwrap();
        let mut grads = trainer.model.params.zeros_like();
        for (enc, y) in &trainer.data {
            trainer.model.accumulate(enc, y, &mut grads).unwrap();
        }
        let base = trainer.model.params.clone();
        let h = 1e-6;
        let probe = |f: &dyn Fn(&mut ToyParams) -> &mut f64, analytic: f64| {
            let (mut plus, mut minus) = (base.clone(), base.clone());
            *f(&mut plus) += h;
            *f(&mut minus) -= h;
            let fd = (data_loss(&trainer, &plus) - data_loss(&trainer, &minus)) / (2.0 * h);
            assert!((fd - analytic).abs() < 1e-5 * (1.0 + fd.abs()), "fd {fd} vs analytic {analytic}");
        };
        let tok = trainer.data[0].0.tokens[2];
        probe(&|p| &mut p.embeddings[[tok, 1]], grads.embeddings[[tok, 1]]);
        probe(&|p| &mut p.head.w_hidden[[2, 5]], grads.head.w_hidden[[2, 5]]);
        probe(&|p| &mut p.head.w_out[[3, 1]], grads.head.w_out[[3, 1]]);
        probe(&|p| &mut p.head.ln_beta[4], grads.head.ln_beta[4]);
        let g = grads.region_proj.as_ref().unwrap();
        probe(&|p| &mut p.region_proj.as_mut().unwrap().weight[[2, 3]], g.weight[[2, 3]]);
        probe(&|p| &mut p.region_proj.as_mut().unwrap().bias[0], g.bias[0]);
    }

    #[test]
    fn loss_trends_down() {
        let set = corpus(InputMode::Caption);
        let out = train_toy_classifier(&set, &vocab(&set), &RegionMap::new(), &config(300), None).unwrap();
        let head: f64 = out.losses[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = out.losses[280..].iter().sum::<f64>() / 20.0;
        assert!(tail < 0.5 * head, "head {head} tail {tail}");
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let set = corpus(InputMode::Caption);
        let v = vocab(&set);
        let mut cfg = config(25);
        let before = ToyTrainer::new(&set, &v, &RegionMap::new(), &cfg, None).unwrap().model.params.clone();
        cfg.learning_rate = 0.0;
        let out = train_toy_classifier(&set, &v, &RegionMap::new(), &cfg, None).unwrap();
        assert_eq!(out.model.params, before);
    }

    #[test]
    fn identical_seeds_identical_runs() {
        let set = corpus(InputMode::Multimodal);
        let regions = regions_for(&set, 6);
        let v = vocab(&set);
        let a = train_toy_classifier(&set, &v, &regions, &config(40), None).unwrap();
        let b = train_toy_classifier(&set, &v, &regions, &config(40), None).unwrap();
        assert_eq!(a.losses.last().unwrap().to_bits(), b.losses.last().unwrap().to_bits());
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn checkpoint_round_trip_and_label_mismatch() {
        let set = corpus(InputMode::Caption);
        let v = vocab(&set);
        let out = train_toy_classifier(&set, &v, &RegionMap::new(), &config(5), None).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        out.model.save(f.path()).unwrap();
        let back = ToyModel::load(f.path()).unwrap();
        assert_eq!(back, out.model);

        let small = build_answer_vocab(&set.annotations(), VocabCutoff::MaxSize(2)).unwrap();
        assert!(matches!(
            ToyTrainer::new(&set, &small, &RegionMap::new(), &config(5), Some(back.clone())),
            Err(Error::Config(_))
        ));
        assert!(ToyTrainer::new(&set, &v, &RegionMap::new(), &config(5), Some(back)).is_ok());
    }

    #[test]
    fn predictions_are_distributions() {
        let set = corpus(InputMode::QuestionOnly);
        let v = vocab(&set);
        let out = train_toy_classifier(&set, &v, &RegionMap::new(), &config(10), None).unwrap();
        for input in classifier_inputs(&set, &RegionMap::new()).unwrap() {
            let p = out.model.classify(&input).unwrap();
            assert_eq!(p.len(), v.n_label());
            assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(p, out.model.classify(&input).unwrap());
        }
    }

    #[test]
    fn multimodal_needs_regions() {
        let set = corpus(InputMode::Multimodal);
        let v = vocab(&set);
        assert!(ToyTrainer::new(&set, &v, &RegionMap::new(), &config(1), None).is_err());
        let wrong_dim = regions_for(&set, 5);
        assert!(matches!(
            ToyTrainer::new(&set, &v, &wrong_dim, &config(1), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let set = corpus(InputMode::Caption);
        let mut cfg = config(0);
        assert!(ToyTrainer::new(&set, &vocab(&set), &RegionMap::new(), &cfg, None).is_err());
        cfg.steps = 1;
        cfg.learning_rate = f64::NAN;
        assert!(ToyTrainer::new(&set, &vocab(&set), &RegionMap::new(), &cfg, None).is_err());
    }
}
