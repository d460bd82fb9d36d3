//! Soft cross-entropy `L = -y · log ŷ` and its gradient with respect to logits.

use crate::error::{Error, Result};
use crate::modeling::distribution::{softmax, PredictionDistribution};
use crate::vocab::SoftLabel;

/// Lower clamp applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceLoss {
    pub value: f64,
    /// The target was all-zero (every answer out of vocabulary); `value` is 0.
    pub fully_oov: bool,
}

fn check_classes(y: &SoftLabel, n_label: usize) -> Result<()> {
    match y.entries.iter().find(|(k, _)| *k >= n_label) {
        Some((k, _)) => Err(Error::Numeric(format!(
            "soft label class {k} outside {n_label} classes"
        ))),
        None => Ok(()),
    }
}

pub fn sce_loss(y_hat: &PredictionDistribution, y: &SoftLabel) -> Result<SceLoss> {
    check_classes(y, y_hat.len())?;
    if y.fully_oov || y.entries.is_empty() {
        return Ok(SceLoss {
            value: 0.0,
            fully_oov: true,
        });
    }
    let probs = y_hat.probs();
    let value = -y
        .entries
        .iter()
        .map(|&(k, p)| p * probs[k].max(LOG_CLAMP).ln())
        .sum::<f64>();
    Ok(SceLoss {
        value,
        fully_oov: false,
    })
}

/// `softmax(logits) - y`. An all-zero target has zero gradient, matching its
/// constant zero loss.
pub fn sce_gradient(logits: &[f64], y: &SoftLabel) -> Result<Vec<f64>> {
    check_classes(y, logits.len())?;
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    if y.fully_oov || y.entries.is_empty() {
        return Ok(vec![0.0; logits.len()]);
    }
    let mut grad = softmax(logits);
    for &(k, p) in &y.entries {
        grad[k] -= p;
    }
    Ok(grad)
}

/// Shannon entropy of the target, the minimum of the loss over `ŷ`.
pub fn entropy(y: &SoftLabel) -> f64 {
    -y.entries
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(_, p)| p * p.ln())
        .sum::<f64>()
}
