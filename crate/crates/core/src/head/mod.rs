//! Reference quality-regression head and its training recipe.
//!
//! The head maps a pooled hidden state `h` (dimension `D`) to a scalar score:
//! `ŝ = w2 · gelu(w1 · h + b1) + b2` with `w1: 2D × D`. An optional frozen
//! projection with a low-rank adapter can sit in front of the head; only the
//! adapter factors and the head are trained.

mod io;
mod labels;
mod lora;
mod train;

use libm::erf;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub use io::{generate_synthetic, read_params, write_loss_trace, write_params, SyntheticSpec, TargetMode};
pub use labels::{dimension_phrase, label_stage1, label_stage1_with_distortions, label_stage2};
pub use lora::{lora_backward, lora_forward, AdaptedProjection, LoraAdapter, LoraGrads};
pub use train::{
    learning_rate_at, model_loss_and_grad, train, warmup_steps, ModelGrads, RegressionModel, StepRecord, TrainConfig,
    TrainOutcome,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeadError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Exact GELU, `x · Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x * INV_SQRT_2))
}

/// d/dx of [`gelu`]: `Φ(x) + x · φ(x)`.
pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + erf(x * INV_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Weights of the two-layer head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// 2D × D
    pub w1: DMatrix<f64>,
    /// 2D
    pub b1: DVector<f64>,
    /// 1 × 2D
    pub w2: DMatrix<f64>,
    pub b2: f64,
}

impl HeadParams {
    pub fn zeros(hidden_dim: usize) -> Self {
        let wide = 2 * hidden_dim;
        Self {
            w1: DMatrix::zeros(wide, hidden_dim),
            b1: DVector::zeros(wide),
            w2: DMatrix::zeros(1, wide),
            b2: 0.0,
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases.
    pub fn random(hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let wide = 2 * hidden_dim;
        let a1 = 1.0 / (hidden_dim as f64).sqrt();
        let a2 = 1.0 / (wide as f64).sqrt();
        Self {
            w1: DMatrix::from_fn(wide, hidden_dim, |_, _| rng.random_range(-a1..a1)),
            b1: DVector::zeros(wide),
            w2: DMatrix::from_fn(1, wide, |_, _| rng.random_range(-a2..a2)),
            b2: 0.0,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn check(&self) -> Result<(), HeadError> {
        let d = self.hidden_dim();
        if d == 0
            || self.w1.nrows() != 2 * d
            || self.b1.len() != 2 * d
            || self.w2.nrows() != 1
            || self.w2.ncols() != 2 * d
        {
            return Err(HeadError::ShapeMismatch(format!(
                "w1 {}x{}, b1 {}, w2 {}x{} do not form a head",
                self.w1.nrows(),
                self.w1.ncols(),
                self.b1.len(),
                self.w2.nrows(),
                self.w2.ncols()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .all(|v| v.is_finite())
            && self.b2.is_finite()
    }

    fn check_input(&self, h: &DVector<f64>) -> Result<(), HeadError> {
        self.check()?;
        if h.len() != self.hidden_dim() {
            return Err(HeadError::ShapeMismatch(format!(
                "input has {} features, head expects {}",
                h.len(),
                self.hidden_dim()
            )));
        }
        Ok(())
    }
}

/// `ŝ = w2 · gelu(w1 · h + b1) + b2`.
pub fn head_forward(h: &DVector<f64>, params: &HeadParams) -> Result<f64, HeadError> {
    params.check_input(h)?;
    let hidden = (&params.w1 * h + &params.b1).map(gelu);
    Ok((&params.w2 * hidden)[(0, 0)] + params.b2)
}

/// Per-sample backward pass; accumulates `scale · ∂ŝ/∂θ` into `grads` and
/// returns `scale · ∂ŝ/∂h`.
pub(crate) fn head_backward(h: &DVector<f64>, params: &HeadParams, scale: f64, grads: &mut HeadParams) -> DVector<f64> {
    let pre = &params.w1 * h + &params.b1;
    let act = pre.map(gelu);
    grads.b2 += scale;
    grads.w2 += act.transpose() * scale;
    let delta = params.w2.transpose().column(0).component_mul(&pre.map(gelu_derivative)) * scale;
    grads.b1 += &delta;
    grads.w1 += &delta * h.transpose();
    params.w1.transpose() * delta
}

/// `sign(ŝ − s)` with subgradient 0 at the kink.
pub(crate) fn l1_sign(diff: f64) -> f64 {
    if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error over the batch and its exact (sub)gradient.
pub fn l1_loss_and_grad(batch: &[(DVector<f64>, f64)], params: &HeadParams) -> Result<(f64, HeadParams), HeadError> {
    if batch.is_empty() {
        return Err(HeadError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grads = HeadParams::zeros(params.hidden_dim());
    let mut loss = 0.0;
    for (h, target) in batch {
        let pred = head_forward(h, params)?;
        let diff = pred - target;
        loss += diff.abs();
        let sign = l1_sign(diff);
        if sign != 0.0 {
            head_backward(h, params, sign / n, &mut grads);
        }
    }
    Ok((loss / n, grads))
}

/// First-position pooling of a `tokens × D` hidden-state sequence.
pub fn pool_first(hidden_states: &DMatrix<f64>) -> Option<DVector<f64>> {
    (hidden_states.nrows() > 0).then(|| hidden_states.row(0).transpose())
}
