//! Experiment configuration, one TOML file per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{CaptionSource, GoldCaptionPolicy, InputMode};
use crate::error::{Error, Result};
use crate::metrics::AccuracyMode;
use crate::modeling::multimodal::RegionConfig;
use crate::modeling::optim::{AdamWConfig, LrSchedule};
use crate::modeling::toy::TrainConfig;

/// Relative dataset paths are resolved against this directory when set.
pub const DATA_ROOT_ENV: &str = "CAPVQA_DATA_ROOT";

pub const PRESETS: &[&str] = &["bert-classify", "t5-generate", "toy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub mode: InputMode,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub warmup_steps: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default)]
    pub accuracy: AccuracyMode,
    #[serde(default = "default_true")]
    pub skip_fully_oov: bool,
    pub data: DataConfig,
    #[serde(default)]
    pub adapters: AdapterConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub region: RegionConfig,
    #[serde(default)]
    pub optimizer: AdamWConfig,
}

fn default_hidden_dim() -> usize {
    64
}

fn default_init_std() -> f64 {
    0.02
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_questions: PathBuf,
    pub train_annotations: PathBuf,
    pub eval_questions: PathBuf,
    pub eval_annotations: PathBuf,
    pub train_captions: Option<PathBuf>,
    pub eval_captions: Option<PathBuf>,
    #[serde(default)]
    pub caption_source: CaptionSource,
    #[serde(default)]
    pub gold_policy: GoldCaptionPolicy,
    /// Gold-caption selections to evaluate each trained model under. Empty
    /// means one selection, seeded like training.
    #[serde(default)]
    pub eval_caption_seeds: Vec<u64>,
    pub regions_dir: Option<PathBuf>,
    /// Fixed answer vocabulary; otherwise built from the training annotations.
    pub vocab: Option<PathBuf>,
    pub vocab_min_count: Option<usize>,
    pub vocab_max_size: Option<usize>,
    /// Start from a saved model, e.g. one trained on a larger corpus first.
    pub init_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    /// `toy`, or `constant:<answer>` for a fixed-answer baseline.
    pub classifier: String,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            classifier: "toy".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassifierKind {
    Toy,
    Constant(String),
}

impl AdapterConfig {
    pub fn classifier_kind(&self) -> Result<ClassifierKind> {
        match self.classifier.split_once(':') {
            None if self.classifier == "toy" => Ok(ClassifierKind::Toy),
            Some(("constant", answer)) if !answer.is_empty() => {
                Ok(ClassifierKind::Constant(answer.to_string()))
            }
            _ => Err(Error::Config(format!(
                "unknown classifier adapter {:?}",
                self.classifier
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub validation_fraction: f64,
    /// Validation is scored every this many steps and after the last step.
    pub eval_interval: usize,
    pub split_seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            validation_fraction: 0.2,
            eval_interval: 100,
            split_seed: 0,
        }
    }
}

impl RunConfig {
    /// Named hyperparameter sets. Data paths are left empty.
    pub fn preset(name: &str) -> Result<Self> {
        let base = |steps, batch_size, learning_rate, schedule, warmup_steps| RunConfig {
            name: name.to_string(),
            mode: InputMode::Caption,
            steps,
            batch_size,
            learning_rate,
            schedule,
            warmup_steps,
            seeds: vec![0, 1, 2],
            hidden_dim: default_hidden_dim(),
            init_std: default_init_std(),
            accuracy: AccuracyMode::Literal,
            skip_fully_oov: true,
            data: DataConfig::default(),
            adapters: AdapterConfig::default(),
            selection: SelectionConfig::default(),
            region: RegionConfig::default(),
            optimizer: AdamWConfig::default(),
        };
        match name {
            "bert-classify" => Ok(RunConfig {
                hidden_dim: 768,
                ..base(88_000, 56, 5e-5, LrSchedule::CosineWarmup, 2_000)
            }),
            // The step count is an upper bound; the final one comes from
            // step selection on a held-out part of the training data.
            "t5-generate" => Ok(RunConfig {
                hidden_dim: 768,
                selection: SelectionConfig {
                    eval_interval: 1_000,
                    ..SelectionConfig::default()
                },
                ..base(20_000, 56, 5e-5, LrSchedule::Constant, 0)
            }),
            "toy" => Ok(RunConfig {
                hidden_dim: 32,
                init_std: 0.1,
                selection: SelectionConfig {
                    eval_interval: 50,
                    ..SelectionConfig::default()
                },
                ..base(1_000, 16, 0.01, LrSchedule::Constant, 0)
            }),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}, expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return fail(format!("run name {:?} must be [A-Za-z0-9._-]+", self.name));
        }
        if self.steps == 0 {
            return fail("steps must be positive".into());
        }
        if self.batch_size == 0 || self.hidden_dim == 0 {
            return fail("batch_size and hidden_dim must be positive".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return fail("seeds must be distinct".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("invalid learning rate {}", self.learning_rate));
        }
        if self.schedule == LrSchedule::Constant && self.warmup_steps != 0 {
            return fail("a constant schedule takes no warmup steps".into());
        }
        let sel = &self.selection;
        if !(sel.validation_fraction > 0.0 && sel.validation_fraction < 1.0) {
            return fail(format!(
                "validation_fraction {} not in (0, 1)",
                sel.validation_fraction
            ));
        }
        if sel.eval_interval == 0 {
            return fail("eval_interval must be positive".into());
        }
        let d = &self.data;
        if self.mode.uses_caption() && (d.train_captions.is_none() || d.eval_captions.is_none()) {
            return fail(format!("{:?} mode needs train and eval captions", self.mode));
        }
        if self.mode.uses_regions() && d.regions_dir.is_none() {
            return fail(format!("{:?} mode needs regions_dir", self.mode));
        }
        if d.vocab.is_some() && (d.vocab_min_count.is_some() || d.vocab_max_size.is_some()) {
            return fail("give a vocabulary file or a cutoff, not both".into());
        }
        if d.vocab.is_none() {
            crate::vocab::VocabCutoff::from_options(d.vocab_min_count, d.vocab_max_size)?;
        }
        self.adapters.classifier_kind()?;
        Ok(())
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let d = &mut self.data;
        let mut out = vec![
            &mut d.train_questions,
            &mut d.train_annotations,
            &mut d.eval_questions,
            &mut d.eval_annotations,
        ];
        out.extend(
            [
                &mut d.train_captions,
                &mut d.eval_captions,
                &mut d.regions_dir,
                &mut d.vocab,
                &mut d.init_checkpoint,
            ]
            .into_iter()
            .flatten(),
        );
        out
    }

    /// Copy with every relative dataset path joined onto `root`.
    pub fn resolved(&self, root: &Path) -> Self {
        let mut out = self.clone();
        for p in out.paths_mut() {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        }
        out
    }

    /// Fails on the first dataset path that does not exist, so a typo is
    /// reported before any training starts.
    pub fn check_paths(&self) -> Result<()> {
        let mut cfg = self.clone();
        for p in cfg.paths_mut() {
            if !p.exists() {
                return Err(Error::Io {
                    path: p.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset path not found"),
                });
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn run_dir_name(&self) -> String {
        format!("{}-{}", self.name, &self.hash()[..12])
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            schedule: self.schedule,
            warmup_steps: self.warmup_steps,
            optimizer: self.optimizer,
            hidden_dim: self.hidden_dim,
            init_std: self.init_std,
            seed,
            skip_fully_oov: self.skip_fully_oov,
            region: self.region,
        }
    }
}

/// Directory that relative dataset paths are resolved against: the
/// environment override if set, otherwise `fallback`.
pub fn data_root(fallback: &Path) -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| fallback.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        let mut c = RunConfig::preset("toy").unwrap();
        c.data.train_questions = "q_train.json".into();
        c.data.train_annotations = "a_train.json".into();
        c.data.eval_questions = "q_eval.json".into();
        c.data.eval_annotations = "a_eval.json".into();
        c.data.train_captions = Some("c_train.json".into());
        c.data.eval_captions = Some("c_eval.json".into());
        c.data.vocab_max_size = Some(100);
        c
    }

    #[test]
    fn presets_carry_reference_hyperparameters() {
        let b = RunConfig::preset("bert-classify").unwrap();
        assert_eq!((b.steps, b.batch_size, b.warmup_steps), (88_000, 56, 2_000));
        assert_eq!(b.learning_rate, 5e-5);
        assert_eq!(b.schedule, LrSchedule::CosineWarmup);
        let t = RunConfig::preset("t5-generate").unwrap();
        assert_eq!((t.schedule, t.warmup_steps, t.learning_rate), (LrSchedule::Constant, 0, 5e-5));
        assert!(RunConfig::preset("gpt").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = sample();
        let text = c.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn invariants_enforced() {
        let mut c = sample();
        c.steps = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = sample();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = sample();
        c.warmup_steps = 10;
        assert!(c.validate().is_err());
        c.schedule = LrSchedule::CosineWarmup;
        assert!(c.validate().is_ok());
        let mut c = sample();
        c.data.eval_captions = None;
        assert!(c.validate().is_err());
        c.mode = InputMode::QuestionOnly;
        assert!(c.validate().is_ok());
        c.adapters.classifier = "bert".into();
        assert!(c.validate().is_err());
        c.adapters.classifier = "constant:yes".into();
        assert!(c.validate().is_ok());
        c.data.vocab_min_count = Some(9);
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = sample().to_toml().replace("steps = ", "stpes = ");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = sample();
        let mut b = sample();
        b.seeds = vec![0, 1];
        assert_ne!(a.hash(), b.hash());
        assert!(a.run_dir_name().starts_with("toy-"));
    }

    #[test]
    fn resolve_joins_relative_paths_only() {
        let mut c = sample();
        c.data.eval_questions = "/abs/q.json".into();
        let r = c.resolved(Path::new("/data"));
        assert_eq!(r.data.train_questions, PathBuf::from("/data/q_train.json"));
        assert_eq!(r.data.eval_questions, PathBuf::from("/abs/q.json"));
        assert_eq!(r.data.train_captions, Some(PathBuf::from("/data/c_train.json")));
    }

    #[test]
    fn missing_path_is_data_error() {
        let c = sample().resolved(Path::new("/nonexistent"));
        let e = c.check_paths().unwrap_err();
        assert_eq!(e.kind(), crate::error::ErrorKind::Data);
    }
}
