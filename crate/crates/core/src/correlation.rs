//! Rank and linear correlation between predicted scores and MOS.
//!
//! SRCC is the Pearson correlation of fractional (mid-)ranks, PLCC the plain
//! product-moment correlation and KRCC Kendall's tau-b, computed with Knight's
//! O(n log n) merge-sort algorithm.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

/// Minimum number of pairs accepted by every metric.
pub const MIN_PAIRS: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrelationError {
    #[error("length mismatch: {predicted} predicted vs {reference} reference values")]
    LengthMismatch { predicted: usize, reference: usize },
    #[error("need at least {min} pairs, got {got}")]
    TooFewPairs { got: usize, min: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("zero variance in at least one input")]
    ZeroVariance,
    #[error("logistic fit did not converge within {0} iterations")]
    FitDiverged(usize),
}

/// Paired predicted / reference scores, validated on construction.
#[derive(Debug, Clone, Copy)]
pub struct ScorePairSet<'a> {
    predicted: &'a [f64],
    reference: &'a [f64],
}

impl<'a> ScorePairSet<'a> {
    pub fn new(predicted: &'a [f64], reference: &'a [f64]) -> Result<Self, CorrelationError> {
        Self::with_min(predicted, reference, MIN_PAIRS)
    }

    fn with_min(predicted: &'a [f64], reference: &'a [f64], min: usize) -> Result<Self, CorrelationError> {
        if predicted.len() != reference.len() {
            return Err(CorrelationError::LengthMismatch {
                predicted: predicted.len(),
                reference: reference.len(),
            });
        }
        if predicted.len() < min {
            return Err(CorrelationError::TooFewPairs {
                got: predicted.len(),
                min,
            });
        }
        if let Some(i) = predicted
            .iter()
            .zip(reference)
            .position(|(p, r)| !p.is_finite() || !r.is_finite())
        {
            return Err(CorrelationError::NonFinite(i));
        }
        Ok(Self { predicted, reference })
    }

    pub fn predicted(&self) -> &'a [f64] {
        self.predicted
    }

    pub fn reference(&self) -> &'a [f64] {
        self.reference
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }
}

/// Ranks 1..n; tied values share the mean of their rank positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation.
pub fn srcc(pairs: &ScorePairSet<'_>) -> Result<f64, CorrelationError> {
    pearson(&fractional_ranks(pairs.predicted), &fractional_ranks(pairs.reference))
}

/// Pearson linear correlation, without any nonlinear pre-mapping.
pub fn plcc(pairs: &ScorePairSet<'_>) -> Result<f64, CorrelationError> {
    pearson(pairs.predicted, pairs.reference)
}

/// Sum of t(t−1)/2 over runs of equal values in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort of `v` counting the exchanges an insertion sort would make.
fn merge_sort_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_sort_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += merge_sort_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b: `(C − D) / sqrt((n0 − n1)(n0 − n2))`.
pub fn krcc(pairs: &ScorePairSet<'_>) -> Result<f64, CorrelationError> {
    let n = pairs.len();
    let mut joint: Vec<(f64, f64)> = pairs
        .predicted
        .iter()
        .copied()
        .zip(pairs.reference.iter().copied())
        .collect();
    joint.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let xs: Vec<f64> = joint.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&joint);

    let mut ys: Vec<f64> = joint.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_sort_swaps(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);

    if n0 == n1 || n0 == n2 {
        return Err(CorrelationError::ZeroVariance);
    }
    // C − D = n0 − n1 − n2 + n3 − 2·swaps
    let numer = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((numer / denom).clamp(-1.0, 1.0))
}

/// SRCC, PLCC and KRCC of one pair set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
}

/// Whether PLCC is computed on raw predictions or after the logistic map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlccMapping {
    #[default]
    Linear,
    Logistic,
}

impl PlccMapping {
    pub fn as_str(self) -> &'static str {
        match self {
            PlccMapping::Linear => "linear",
            PlccMapping::Logistic => "logistic",
        }
    }
}

pub fn metric_triple(pairs: &ScorePairSet<'_>, mapping: PlccMapping) -> Result<MetricTriple, CorrelationError> {
    let plcc = match mapping {
        PlccMapping::Linear => plcc(pairs)?,
        PlccMapping::Logistic => {
            let mapped = logistic_map(pairs, &LogisticConfig::default())?;
            plcc(&ScorePairSet::new(&mapped, pairs.reference)?)?
        }
    };
    Ok(MetricTriple {
        srcc: srcc(pairs)?,
        plcc,
        krcc: krcc(pairs)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub max_iterations: usize,
    /// Relative SSE improvement below which the fit is considered converged.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-12,
        }
    }
}

/// Four-parameter logistic `(b1 − b2) / (1 + exp(−(x − b3)/b4)) + b2`, b4 > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logistic4 {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl Logistic4 {
    fn gate(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-(x - self.b3) / self.b4).exp())
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.b1 - self.b2) * self.gate(x) + self.b2
    }

    fn gradient(&self, x: f64) -> Vector4<f64> {
        let g = self.gate(x);
        let slope = (self.b1 - self.b2) * g * (1.0 - g);
        Vector4::new(
            g,
            1.0 - g,
            -slope / self.b4,
            -slope * (x - self.b3) / (self.b4 * self.b4),
        )
    }

    fn from_vec(v: &Vector4<f64>) -> Self {
        Self {
            b1: v[0],
            b2: v[1],
            b3: v[2],
            b4: v[3],
        }
    }

    fn to_vec(self) -> Vector4<f64> {
        Vector4::new(self.b1, self.b2, self.b3, self.b4)
    }
}

fn sse(xs: &[f64], ys: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (f(x) - y).powi(2)).sum()
}

/// Least-squares monotone logistic map of predictions onto the reference.
///
/// The family's affine limit (b4 → ∞ with a matching span) is also a
/// candidate: when the iterate is still drifting toward it at the iteration
/// cap and the affine fit is at least as good, the affine fit is returned.
pub fn logistic_map(pairs: &ScorePairSet<'_>, config: &LogisticConfig) -> Result<Vec<f64>, CorrelationError> {
    let pairs = ScorePairSet::with_min(pairs.predicted, pairs.reference, 5)?;
    let (xs, ys) = (pairs.predicted, pairs.reference);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CorrelationError::ZeroVariance);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let affine = |x: f64| slope * x + intercept;
    let affine_sse = sse(xs, ys, affine);

    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
        (lo.min(y), hi.max(y))
    });
    let (b1, b2) = if slope >= 0.0 { (ymax, ymin) } else { (ymin, ymax) };
    let mut params = Logistic4 {
        b1,
        b2,
        b3: mx,
        b4: (sxx / n).sqrt(),
    };
    let mut current = sse(xs, ys, |x| params.eval(x));
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..config.max_iterations {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (&x, &y) in xs.iter().zip(ys) {
            let g = params.gradient(x);
            let r = params.eval(x) - y;
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for d in 0..4 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = Logistic4::from_vec(&(params.to_vec() + step));
            let trial = if candidate.b4 > 0.0 {
                sse(xs, ys, |x| candidate.eval(x))
            } else {
                f64::INFINITY
            };
            if trial.is_finite() && trial <= current {
                let improvement = current - trial;
                params = candidate;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if improvement <= config.tolerance * current.max(f64::MIN_POSITIVE) {
                    converged = true;
                }
                current = trial;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left: local minimum
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !current.is_finite() {
        return Err(CorrelationError::FitDiverged(config.max_iterations));
    }
    if affine_sse <= current {
        return Ok(xs.iter().map(|&x| affine(x)).collect());
    }
    if !converged {
        return Err(CorrelationError::FitDiverged(config.max_iterations));
    }
    Ok(xs.iter().map(|&x| params.eval(x)).collect())
}
