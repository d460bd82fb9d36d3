//! Classification head over a pooled encoder output:
//!
//! ```text
//! h = LayerNorm(GELU(W_h t + b_h))
//! ŷ = Softmax(W_out^T h + b_out)
//! ```
//!
//! `W_h` is `d_h × d_h`, `W_out` is `d_h × n_label`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modeling::distribution::PredictionDistribution;

/// Hidden size of the base encoder the head was designed for.
pub const REFERENCE_HIDDEN_DIM: usize = 768;
pub const LAYER_NORM_EPS: f64 = 1e-12;

/// First-token encoder output fed to the head.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRepresentation(pub Array1<f64>);

impl PooledRepresentation {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("pooled representation is not finite".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHeadParams {
    pub w_hidden: Array2<f64>,
    pub b_hidden: Array1<f64>,
    pub ln_gamma: Array1<f64>,
    pub ln_beta: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl ClassifierHeadParams {
    /// Small-normal weights scaled by `init_std`, zero biases, LayerNorm at 1/0.
    pub fn init<R: Rng + ?Sized>(d_h: usize, n_label: usize, init_std: f64, rng: &mut R) -> Self {
        let mut normal = || init_std * rng.sample::<f64, _>(StandardNormal);
        let w_hidden = Array2::from_shape_simple_fn((d_h, d_h), &mut normal);
        let w_out = Array2::from_shape_simple_fn((d_h, n_label), &mut normal);
        Self {
            w_hidden,
            b_hidden: Array1::zeros(d_h),
            ln_gamma: Array1::ones(d_h),
            ln_beta: Array1::zeros(d_h),
            w_out,
            b_out: Array1::zeros(n_label),
        }
    }

    pub fn zeros(d_h: usize, n_label: usize) -> Self {
        Self {
            w_hidden: Array2::zeros((d_h, d_h)),
            b_hidden: Array1::zeros(d_h),
            ln_gamma: Array1::zeros(d_h),
            ln_beta: Array1::zeros(d_h),
            w_out: Array2::zeros((d_h, n_label)),
            b_out: Array1::zeros(n_label),
        }
    }

    pub fn d_h(&self) -> usize {
        self.b_hidden.len()
    }

    pub fn n_label(&self) -> usize {
        self.b_out.len()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (d, n) = (self.d_h(), self.n_label());
        let ok = self.w_hidden.dim() == (d, d)
            && self.ln_gamma.len() == d
            && self.ln_beta.len() == d
            && self.w_out.dim() == (d, n);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "inconsistent head shapes for d_h={d}, n_label={n}"
            )))
        }
    }
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub pre_activation: Array1<f64>,
    pub normalized: Array1<f64>,
    pub inv_std: f64,
    pub hidden: Array1<f64>,
    pub logits: Array1<f64>,
}

pub fn head_trace(pooled: ArrayView1<f64>, params: &ClassifierHeadParams) -> Result<HeadTrace> {
    if pooled.len() != params.d_h() {
        return Err(Error::Config(format!(
            "pooled dimension {} does not match head d_h {}",
            pooled.len(),
            params.d_h()
        )));
    }
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("pooled representation is not finite".into()));
    }
    let pre_activation = params.w_hidden.dot(&pooled) + &params.b_hidden;
    let activated = pre_activation.mapv(gelu);
    let d = activated.len() as f64;
    let mean = activated.sum() / d;
    let var = activated.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let normalized = activated.mapv(|a| (a - mean) * inv_std);
    let hidden = &normalized * &params.ln_gamma + &params.ln_beta;
    let logits = params.w_out.t().dot(&hidden) + &params.b_out;
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("head produced non-finite logits".into()));
    }
    Ok(HeadTrace {
        pre_activation,
        normalized,
        inv_std,
        hidden,
        logits,
    })
}

pub fn classifier_head_forward(
    pooled: &PooledRepresentation,
    params: &ClassifierHeadParams,
) -> Result<PredictionDistribution> {
    params.check_shapes()?;
    let trace = head_trace(pooled.0.view(), params)?;
    PredictionDistribution::from_logits(trace.logits.as_slice().expect("contiguous logits"))
}

/// Accumulates parameter gradients for `d_logits` into `grads` and returns the
/// gradient with respect to the pooled input.
pub fn head_backward(
    pooled: ArrayView1<f64>,
    params: &ClassifierHeadParams,
    trace: &HeadTrace,
    d_logits: ArrayView1<f64>,
    grads: &mut ClassifierHeadParams,
) -> Array1<f64> {
    let n = trace.hidden.len() as f64;
    grads
        .w_out
        .zip_mut_with(&outer(trace.hidden.view(), d_logits), |g, v| *g += v);
    grads.b_out += &d_logits;

    let d_hidden = params.w_out.dot(&d_logits);
    grads.ln_gamma += &(&d_hidden * &trace.normalized);
    grads.ln_beta += &d_hidden;

    let d_norm = &d_hidden * &params.ln_gamma;
    let mean_d = d_norm.sum() / n;
    let mean_dx = (&d_norm * &trace.normalized).sum() / n;
    let d_activated = (&d_norm - mean_d - &trace.normalized * mean_dx) * trace.inv_std;
    let d_pre = &d_activated * &trace.pre_activation.mapv(gelu_derivative);

    grads
        .w_hidden
        .zip_mut_with(&outer(d_pre.view(), pooled), |g, v| *g += v);
    grads.b_hidden += &d_pre;
    params.w_hidden.t().dot(&d_pre)
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
