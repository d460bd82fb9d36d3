use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total probability mass of a distribution.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// A probability vector over the answer vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PredictionDistribution(Vec<f64>);

impl PredictionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Numeric("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Numeric(
                "distribution has negative or non-finite entries".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Numeric(format!("distribution sums to {total}")));
        }
        Ok(Self(probs))
    }

    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        Self::new(softmax(logits))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0).expect("distribution is non-empty")
    }
}

impl TryFrom<Vec<f64>> for PredictionDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PredictionDistribution> for Vec<f64> {
    fn from(d: PredictionDistribution) -> Self {
        d.0
    }
}
