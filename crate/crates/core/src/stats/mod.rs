//! Statistical core: per-subject normalisation, MOS aggregation, quality-level
//! discretisation, inter-rater reliability and grouped descriptive tables.
//!
//! Everything here is a pure function over immutable inputs.

mod aggregate;
mod fdist;
mod icc;
mod icc_table;
mod levels;
mod matrix;
mod mos;

pub use aggregate::{aggregate_scores, GroupBy, GroupStat};
pub use fdist::{f_cdf, f_quantile};
pub use icc::{icc_two_way, IccResult, ReliabilityLevel};
pub use icc_table::{icc_csv, icc_table, ICC_COLUMNS};
pub use levels::{discretize, level_index, QualityLevel};
pub use matrix::{RatingMatrix, RepeatObservation};
pub use mos::{compute_mos, compute_mos_screened, subject_norms, MosEntry, MosReport, SubjectNorm};

/// Default raw rating scale.
pub const DEFAULT_RAW_SCALE: (f64, f64) = (0.0, 100.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("subject `{0}` is degenerate (fewer than two ratings or zero variance)")]
    DegenerateSubject(String),
    #[error("item `{0}` has no ratings")]
    EmptyItem(String),
    #[error("score {score} outside [{min}, {max}]")]
    OutOfRange { score: f64, min: f64, max: f64 },
    #[error("invalid level range: min {min} must be below max {max} and n_levels must be positive")]
    InvalidRange { min: f64, max: f64 },
    #[error("grid is incomplete: {} missing cell(s)", .0.len())]
    IncompleteGrid(Vec<(String, String)>),
    #[error("grid needs at least 2 items and 2 raters (got {items}x{raters})")]
    GridTooSmall { items: usize, raters: usize },
    #[error("zero variance: every cell holds the same value")]
    ZeroVariance,
    #[error("item `{0}` is not in the manifest")]
    UnknownItem(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}
