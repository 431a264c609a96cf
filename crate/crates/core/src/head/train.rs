use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::lora::{lora_backward, AdaptedProjection, LoraGrads};
use super::{head_backward, head_forward, l1_sign, HeadError, HeadParams};
use crate::seed;

/// Optimizer settings. Defaults are the stage-1 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Caps the run length; epochs keep cycling until it is reached.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

impl TrainConfig {
    pub fn stage1() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 4,
            weight_decay: 0.01,
            warmup_ratio: 0.05,
            epochs: 1,
            seed: 0,
            max_steps: None,
        }
    }

    pub fn stage2() -> Self {
        Self {
            weight_decay: 0.1,
            epochs: 2,
            ..Self::stage1()
        }
    }

    pub fn validate(&self) -> Result<(), HeadError> {
        let bad = |m: &str| Err(HeadError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.epochs == 0 && self.max_steps.is_none() {
            return bad("epochs must be positive");
        }
        Ok(())
    }

    pub fn total_steps(&self, n_samples: usize) -> usize {
        let per_epoch = n_samples.div_ceil(self.batch_size);
        self.max_steps.unwrap_or(per_epoch * self.epochs)
    }
}

pub fn warmup_steps(total_steps: usize, warmup_ratio: f64) -> usize {
    (warmup_ratio * total_steps as f64).ceil() as usize
}

/// Rate at 1-based `step`: linear ramp over the warmup steps, then constant.
pub fn learning_rate_at(step: usize, total_steps: usize, config: &TrainConfig) -> f64 {
    let warm = warmup_steps(total_steps, config.warmup_ratio);
    if warm == 0 || step >= warm {
        config.learning_rate
    } else {
        config.learning_rate * step as f64 / warm as f64
    }
}

/// Head plus an optional adapted input projection.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub head: HeadParams,
    pub projection: Option<AdaptedProjection>,
}

impl RegressionModel {
    pub fn head_only(head: HeadParams) -> Self {
        Self { head, projection: None }
    }

    pub fn input_dim(&self) -> usize {
        match &self.projection {
            Some(p) => p.frozen.ncols(),
            None => self.head.hidden_dim(),
        }
    }

    pub fn check(&self) -> Result<(), HeadError> {
        self.head.check()?;
        if let Some(p) = &self.projection {
            if p.frozen.nrows() != self.head.hidden_dim() {
                return Err(HeadError::ShapeMismatch(format!(
                    "projection emits {} features, head expects {}",
                    p.frozen.nrows(),
                    self.head.hidden_dim()
                )));
            }
        }
        Ok(())
    }

    fn pooled(&self, x: &DVector<f64>) -> Result<DVector<f64>, HeadError> {
        match &self.projection {
            Some(p) => p.forward(x),
            None => Ok(x.clone()),
        }
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<f64, HeadError> {
        head_forward(&self.pooled(x)?, &self.head)
    }

    pub fn mean_l1(&self, data: &[(DVector<f64>, f64)]) -> Result<f64, HeadError> {
        if data.is_empty() {
            return Err(HeadError::EmptyBatch);
        }
        let mut total = 0.0;
        for (x, s) in data {
            total += (self.predict(x)? - s).abs();
        }
        Ok(total / data.len() as f64)
    }

    fn is_finite(&self) -> bool {
        self.head.is_finite()
            && self
                .projection
                .as_ref()
                .is_none_or(|p| p.adapter.a.iter().chain(p.adapter.b.iter()).all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub head: HeadParams,
    pub lora: Option<LoraGrads>,
}

/// Mean L1 loss over `batch` and gradients for every trainable tensor. The
/// frozen projection never receives a gradient.
pub fn model_loss_and_grad(
    batch: &[(DVector<f64>, f64)],
    model: &RegressionModel,
) -> Result<(f64, ModelGrads), HeadError> {
    if batch.is_empty() {
        return Err(HeadError::EmptyBatch);
    }
    model.check()?;
    let n = batch.len() as f64;
    let mut grads = ModelGrads {
        head: HeadParams::zeros(model.head.hidden_dim()),
        lora: model.projection.as_ref().map(|p| LoraGrads::zeros_like(&p.adapter)),
    };
    let mut loss = 0.0;
    for (x, target) in batch {
        let h = model.pooled(x)?;
        let diff = head_forward(&h, &model.head)? - target;
        loss += diff.abs();
        let sign = l1_sign(diff);
        if sign == 0.0 {
            continue;
        }
        let upstream = head_backward(&h, &model.head, sign / n, &mut grads.head);
        if let (Some(p), Some(g)) = (&model.projection, grads.lora.as_mut()) {
            lora_backward(x, &p.adapter, &upstream, g);
        }
    }
    Ok((loss / n, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub learning_rate: f64,
    pub batch_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RegressionModel,
    pub trace: Vec<StepRecord>,
    /// Mean L1 over the full data set before the first and after the last step.
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// `θ ← θ·(1 − lr·wd) − lr·g`
fn decay_step(theta: &mut DMatrix<f64>, grad: &DMatrix<f64>, lr: f64, wd: f64) {
    let keep = 1.0 - lr * wd;
    theta.zip_apply(grad, |t, g| *t = *t * keep - lr * g);
}

fn apply_update(model: &mut RegressionModel, grads: &ModelGrads, lr: f64, wd: f64) {
    let head = &mut model.head;
    decay_step(&mut head.w1, &grads.head.w1, lr, wd);
    decay_step(&mut head.w2, &grads.head.w2, lr, wd);
    head.b1.zip_apply(&grads.head.b1, |t, g| *t -= lr * g);
    head.b2 -= lr * grads.head.b2;
    if let (Some(p), Some(g)) = (model.projection.as_mut(), grads.lora.as_ref()) {
        decay_step(&mut p.adapter.a, &g.a, lr, wd);
        decay_step(&mut p.adapter.b, &g.b, lr, wd);
    }
}

/// Mini-batch gradient descent with linear warmup and decoupled weight decay
/// on matrices. Sample order is reshuffled every epoch from `config.seed`.
pub fn train(
    config: &TrainConfig,
    data: &[(DVector<f64>, f64)],
    model: RegressionModel,
) -> Result<TrainOutcome, HeadError> {
    config.validate()?;
    if data.is_empty() {
        return Err(HeadError::EmptyBatch);
    }
    model.check()?;
    let mut model = model;
    let initial_loss = model.mean_l1(data)?;
    let total = config.total_steps(data.len());
    let mut trace = Vec::with_capacity(total);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    let mut batch = Vec::with_capacity(config.batch_size);

    for step in 1..=total {
        if cursor >= order.len() {
            order = (0..data.len()).collect();
            order.shuffle(&mut seed::rng(seed::derive_keyed(config.seed, "epoch", epoch)));
            epoch += 1;
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        batch.clear();
        batch.extend(order[cursor..end].iter().map(|&i| data[i].clone()));
        cursor = end;

        let (loss, grads) = model_loss_and_grad(&batch, &model)?;
        if !loss.is_finite() {
            return Err(HeadError::NonFiniteLoss { step });
        }
        let lr = learning_rate_at(step, total, config);
        if lr != 0.0 {
            apply_update(&mut model, &grads, lr, config.weight_decay);
            if !model.is_finite() {
                return Err(HeadError::NonFiniteLoss { step });
            }
        }
        trace.push(StepRecord {
            step,
            learning_rate: lr,
            batch_loss: loss,
        });
    }

    let final_loss = model.mean_l1(data)?;
    if !final_loss.is_finite() {
        return Err(HeadError::NonFiniteLoss { step: total });
    }
    Ok(TrainOutcome {
        model,
        trace,
        initial_loss,
        final_loss,
    })
}
