//! Caption-based visual question answering pipeline.
//!
//! The crate covers the full text-only VQA workflow: loading VQA-style
//! question/annotation/caption documents, scoring answers with the VQA
//! accuracy metric, building answer vocabularies and soft-label targets,
//! the MLP classification head and soft cross-entropy loss, late fusion of
//! two classifiers, and a seeded experiment harness that ties it together.
//!
//! Heavy pretrained models (captioners, BERT/T5-style encoders) plug in
//! through the adapter traits in [`modeling::adapters`]; a small trainable
//! bag-of-embeddings model stands in for them in tests and desk-scale runs.

pub mod dataset;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod metrics;
pub mod modeling;
pub mod seeding;
pub mod synthetic;
pub mod vocab;

pub use dataset::{
    AnnotationRecord, CaptionRecord, CaptionSource, Example, ExampleSet, ImageId, InputMode,
    QuestionId, QuestionRecord, Split,
};
pub use error::{Error, ErrorKind, Result};
pub use fusion::{late_fuse, FusedPrediction};
pub use metrics::{EvalReport, RunAggregate};
pub use modeling::{PredictionDistribution, RegionFeatureSet};
pub use vocab::{AnswerVocab, SoftLabel, TargetPool};
