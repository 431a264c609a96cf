use serde::{Deserialize, Serialize};

use crate::Dimension;

use super::{RatingMatrix, StatsError};

/// Mean and sample standard deviation of one subject's present ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectNorm {
    pub subject_id: String,
    pub mean: f64,
    pub stddev: f64,
}

/// Per-item, per-dimension Mean Opinion Score on the nominal 0–100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosEntry {
    pub item_id: String,
    pub dimension: Dimension,
    pub mos: f64,
    pub rater_count: usize,
    pub stddev_across_raters: f64,
}

/// MOS entries plus the screening outcome of [`compute_mos_screened`].
#[derive(Debug, Clone, PartialEq)]
pub struct MosReport {
    pub entries: Vec<MosEntry>,
    pub excluded_subjects: Vec<String>,
    /// Entries whose MOS lies outside [0, 100] (some |z| > 3).
    pub out_of_range: usize,
}

/// Welford running mean / sum of squared deviations.
fn welford(values: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for x in values {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    (n, mean, m2)
}

fn norm_of(matrix: &RatingMatrix, subject: usize) -> Result<SubjectNorm, StatsError> {
    let id = &matrix.subject_ids()[subject];
    let (n, mean, m2) = welford(matrix.subject_values(subject));
    if n < 2 {
        return Err(StatsError::DegenerateSubject(id.clone()));
    }
    let stddev = (m2 / (n - 1) as f64).sqrt();
    if !(stddev > 0.0) {
        return Err(StatsError::DegenerateSubject(id.clone()));
    }
    Ok(SubjectNorm {
        subject_id: id.clone(),
        mean,
        stddev,
    })
}

/// Mean and sample standard deviation (N−1 denominator) per subject, over that
/// subject's present ratings only. Fails on the first degenerate subject.
pub fn subject_norms(matrix: &RatingMatrix) -> Result<Vec<SubjectNorm>, StatsError> {
    (0..matrix.n_subjects()).map(|s| norm_of(matrix, s)).collect()
}

/// Z-score every subject, rescale with `100 (z + 3) / 6` and average per item.
///
/// Values are deliberately not clamped to [0, 100].
pub fn compute_mos(matrix: &RatingMatrix) -> Result<Vec<MosEntry>, StatsError> {
    let norms = subject_norms(matrix)?;
    let mut out = Vec::with_capacity(matrix.n_items());
    for (item, item_id) in matrix.item_ids().iter().enumerate() {
        let scaled = norms.iter().enumerate().filter_map(|(s, norm)| {
            matrix.get(item, s).map(|r| {
                let z = (r - norm.mean) / norm.stddev;
                100.0 * (z + 3.0) / 6.0
            })
        });
        let (count, mos, m2) = welford(scaled);
        if count == 0 {
            return Err(StatsError::EmptyItem(item_id.clone()));
        }
        let spread = if count > 1 {
            (m2 / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        out.push(MosEntry {
            item_id: item_id.clone(),
            dimension: matrix.dimension(),
            mos,
            rater_count: count,
            stddev_across_raters: spread,
        });
    }
    Ok(out)
}

/// Excludes degenerate subjects (with a warning) and then computes MOS.
pub fn compute_mos_screened(matrix: &RatingMatrix) -> Result<MosReport, StatsError> {
    let excluded: Vec<String> = (0..matrix.n_subjects())
        .filter(|&s| norm_of(matrix, s).is_err())
        .map(|s| matrix.subject_ids()[s].clone())
        .collect();
    for id in &excluded {
        log::warn!("excluding degenerate subject `{id}` from {} MOS", matrix.dimension());
    }
    let kept = if excluded.is_empty() {
        matrix.clone()
    } else {
        matrix.without_subjects(&excluded)
    };
    let entries = compute_mos(&kept)?;
    let out_of_range = entries.iter().filter(|e| !(0.0..=100.0).contains(&e.mos)).count();
    Ok(MosReport {
        entries,
        excluded_subjects: excluded,
        out_of_range,
    })
}
