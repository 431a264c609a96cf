use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::HeadError;

pub const DEFAULT_RANK: usize = 8;
pub const DEFAULT_ALPHA: f64 = 32.0;

/// Low-rank update `ΔW = B·A`, applied with scale `alpha / rank`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    /// rank × d_in
    pub a: DMatrix<f64>,
    /// d_out × rank
    pub b: DMatrix<f64>,
    pub alpha: f64,
}

impl LoraAdapter {
    /// Zero adapter; the adapted layer starts equal to the frozen one.
    pub fn zeros(d_in: usize, d_out: usize, rank: usize, alpha: f64) -> Result<Self, HeadError> {
        if rank == 0 {
            return Err(HeadError::InvalidConfig("adapter rank must be at least 1".into()));
        }
        Ok(Self {
            a: DMatrix::zeros(rank, d_in),
            b: DMatrix::zeros(d_out, rank),
            alpha,
        })
    }

    /// `A` uniform in `±1/sqrt(d_in)`, `B = 0`.
    pub fn init(d_in: usize, d_out: usize, rank: usize, alpha: f64, rng: &mut impl Rng) -> Result<Self, HeadError> {
        let mut adapter = Self::zeros(d_in, d_out, rank, alpha)?;
        let bound = 1.0 / (d_in.max(1) as f64).sqrt();
        adapter.a = DMatrix::from_fn(rank, d_in, |_, _| rng.random_range(-bound..bound));
        Ok(adapter)
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    pub fn d_in(&self) -> usize {
        self.a.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.b.nrows()
    }

    /// `(alpha / r) · B·A`
    pub fn delta(&self) -> DMatrix<f64> {
        &self.b * &self.a * self.scale()
    }

    fn check(&self, x: &DVector<f64>, frozen: &DMatrix<f64>) -> Result<(), HeadError> {
        if self.rank() == 0 || self.b.ncols() != self.rank() {
            return Err(HeadError::ShapeMismatch(format!(
                "adapter factors {}x{} and {}x{} disagree on rank",
                self.a.nrows(),
                self.a.ncols(),
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        if frozen.ncols() != x.len() || frozen.ncols() != self.d_in() || frozen.nrows() != self.d_out() {
            return Err(HeadError::ShapeMismatch(format!(
                "frozen {}x{}, adapter {}->{}, input {}",
                frozen.nrows(),
                frozen.ncols(),
                self.d_in(),
                self.d_out(),
                x.len()
            )));
        }
        Ok(())
    }
}

/// Gradients with respect to the adapter factors only.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraGrads {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LoraGrads {
    pub fn zeros_like(adapter: &LoraAdapter) -> Self {
        Self {
            a: DMatrix::zeros(adapter.a.nrows(), adapter.a.ncols()),
            b: DMatrix::zeros(adapter.b.nrows(), adapter.b.ncols()),
        }
    }
}

/// `W·x + (alpha / r) · B·(A·x)`.
pub fn lora_forward(x: &DVector<f64>, frozen: &DMatrix<f64>, adapter: &LoraAdapter) -> Result<DVector<f64>, HeadError> {
    adapter.check(x, frozen)?;
    let ax = &adapter.a * x;
    Ok(frozen * x + (&adapter.b * ax) * adapter.scale())
}

/// Accumulates `∂L/∂A` and `∂L/∂B` given upstream `g = ∂L/∂y`.
pub fn lora_backward(x: &DVector<f64>, adapter: &LoraAdapter, upstream: &DVector<f64>, grads: &mut LoraGrads) {
    let s = adapter.scale();
    let ax = &adapter.a * x;
    grads.b += upstream * ax.transpose() * s;
    grads.a += (adapter.b.transpose() * upstream) * x.transpose() * s;
}

/// A frozen projection followed by its trainable adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProjection {
    pub frozen: DMatrix<f64>,
    pub adapter: LoraAdapter,
}

impl AdaptedProjection {
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>, HeadError> {
        lora_forward(x, &self.frozen, &self.adapter)
    }
}
