//! Model-facing math and contracts.
//!
//! [`input`] serializes caption/question pairs, [`head`] is the one-hidden-layer
//! classification MLP, [`loss`] the soft cross-entropy with its closed-form
//! gradient, [`multimodal`] region features and early-fusion input assembly,
//! [`adapters`] the boundaries around external captioners and answer models,
//! and [`toy`] a small trainable classifier standing in for a pretrained encoder.

pub mod adapters;
pub mod distribution;
pub mod head;
pub mod input;
pub mod loss;
pub mod multimodal;
pub mod optim;
pub mod toy;

pub use distribution::{softmax, PredictionDistribution};
pub use head::{classifier_head_forward, ClassifierHeadParams, PooledRepresentation};
pub use input::{format_pair_input, InputStyle, SerializedInput, TokenizedInput};
pub use loss::{sce_gradient, sce_loss, SceLoss};
pub use multimodal::{assemble_multimodal_input, RegionConfig, RegionFeatureSet};
