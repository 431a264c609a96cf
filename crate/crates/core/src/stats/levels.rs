use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StatsError;

/// Five ordered textual quality levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityLevel {
    Bad,
    Poor,
    Fair,
    Good,
    Excellent,
}

impl QualityLevel {
    pub const COUNT: usize = 5;
    pub const ALL: [QualityLevel; 5] = [
        QualityLevel::Bad,
        QualityLevel::Poor,
        QualityLevel::Fair,
        QualityLevel::Good,
        QualityLevel::Excellent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualityLevel::Bad => "bad",
            QualityLevel::Poor => "poor",
            QualityLevel::Fair => "fair",
            QualityLevel::Good => "good",
            QualityLevel::Excellent => "excellent",
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for QualityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown quality level `{s}`"))
    }
}

/// Zero-based level of `score` when `[min, max]` is cut into `n_levels` equal
/// intervals `[m + i(M−m)/N, m + (i+1)(M−m)/N)`; the last interval is closed.
pub fn level_index(score: f64, min: f64, max: f64, n_levels: usize) -> Result<usize, StatsError> {
    if !(min < max) || n_levels == 0 || !min.is_finite() || !max.is_finite() {
        return Err(StatsError::InvalidRange { min, max });
    }
    if !(min..=max).contains(&score) {
        return Err(StatsError::OutOfRange { score, min, max });
    }
    let n = n_levels as f64;
    let lower = |i: usize| min + (i as f64 / n) * (max - min);
    let mut i = (((score - min) / (max - min)) * n).floor() as usize;
    i = i.min(n_levels - 1);
    // floor() can land one off a boundary; settle against the interval bounds
    while i > 0 && score < lower(i) {
        i -= 1;
    }
    while i + 1 < n_levels && score >= lower(i + 1) {
        i += 1;
    }
    Ok(i)
}

/// Five-level discretisation of a MOS over the observed `[min_mos, max_mos]`.
pub fn discretize(score: f64, min_mos: f64, max_mos: f64, n_levels: usize) -> Result<QualityLevel, StatsError> {
    if n_levels != QualityLevel::COUNT {
        return Err(StatsError::InvalidRange {
            min: min_mos,
            max: max_mos,
        });
    }
    let i = level_index(score, min_mos, max_mos, n_levels)?;
    Ok(QualityLevel::ALL[i])
}
