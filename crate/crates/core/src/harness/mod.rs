//! Experiment orchestration: run configs, seeded multi-run training and
//! evaluation, step selection and prediction files.

pub mod config;
pub mod generative;
pub mod predictions;
pub mod run;
pub mod steps;

pub use config::{data_root, RunConfig, DATA_ROOT_ENV, PRESETS};
pub use predictions::{read_predictions, write_predictions, Predictions};
pub use run::{run_experiment, RunArtifacts, SeedRun};
pub use steps::{select_steps_with, select_training_steps, StepSelection, TrainingSession};
