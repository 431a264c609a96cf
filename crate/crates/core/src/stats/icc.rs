use std::fmt;

use serde::{Deserialize, Serialize};

use super::{f_quantile, StatsError};

/// Two-way random-effects, absolute-agreement intraclass correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccResult {
    /// ICC(2,1): reliability of a single rater.
    pub icc_single: f64,
    /// ICC(2,k): reliability of the k-rater mean.
    pub icc_average: f64,
    pub ci_single: (f64, f64),
    pub ci_average: (f64, f64),
    pub confidence: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub ms_rows: f64,
    pub ms_cols: f64,
    pub ms_error: f64,
}

/// Qualitative reliability band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReliabilityLevel {
    Poor,
    Fair,
    Moderate,
    Good,
    Excellent,
}

impl ReliabilityLevel {
    /// Single-rater bands: poor < 0.40 ≤ fair < 0.60 ≤ good < 0.75 ≤ excellent.
    pub fn single_rater(icc: f64) -> Self {
        match icc {
            x if x < 0.40 => ReliabilityLevel::Poor,
            x if x < 0.60 => ReliabilityLevel::Fair,
            x if x < 0.75 => ReliabilityLevel::Good,
            _ => ReliabilityLevel::Excellent,
        }
    }

    /// Mean-rating bands: poor < 0.50 ≤ moderate < 0.75 ≤ good < 0.90 ≤ excellent.
    pub fn mean_rating(icc: f64) -> Self {
        match icc {
            x if x < 0.50 => ReliabilityLevel::Poor,
            x if x < 0.75 => ReliabilityLevel::Moderate,
            x if x < 0.90 => ReliabilityLevel::Good,
            _ => ReliabilityLevel::Excellent,
        }
    }
}

impl fmt::Display for ReliabilityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReliabilityLevel::Poor => "Poor",
            ReliabilityLevel::Fair => "Fair",
            ReliabilityLevel::Moderate => "Moderate",
            ReliabilityLevel::Good => "Good",
            ReliabilityLevel::Excellent => "Excellent",
        })
    }
}

/// Shrout–Fleiss ICC(2,1) and ICC(2,k) from a complete items × raters grid,
/// with McGraw–Wong F-based confidence intervals.
pub fn icc_two_way(grid: &[Vec<f64>], confidence: f64) -> Result<IccResult, StatsError> {
    let n = grid.len();
    let k = grid.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(StatsError::GridTooSmall { items: n, raters: k });
    }
    if let Some(bad) = grid.iter().position(|r| r.len() != k) {
        return Err(StatsError::Shape(format!(
            "row {bad} has {} cells, expected {k}",
            grid[bad].len()
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Shape(format!("confidence {confidence} not in (0, 1)")));
    }
    let first = grid[0][0];
    if grid.iter().flatten().all(|&v| v == first) {
        return Err(StatsError::ZeroVariance);
    }

    let (nf, kf) = (n as f64, k as f64);
    let row_means: Vec<f64> = grid.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k).map(|c| grid.iter().map(|r| r[c]).sum::<f64>() / nf).collect();
    let grand = col_means.iter().sum::<f64>() / kf;

    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_error: f64 = grid
        .iter()
        .zip(&row_means)
        .flat_map(|(row, rm)| {
            row.iter()
                .zip(&col_means)
                .map(move |(x, cm)| (x - rm - cm + grand).powi(2))
        })
        .sum();

    let msr = ss_rows / (nf - 1.0);
    let msc = ss_cols / (kf - 1.0);
    let mse = ss_error / ((nf - 1.0) * (kf - 1.0));

    let icc1 = (msr - mse) / (msr + (kf - 1.0) * mse + kf * (msc - mse) / nf);
    let icck = (msr - mse) / (msr + (msc - mse) / nf);

    let ci_single = ci_single_rater(icc1, msr, msc, mse, nf, kf, 1.0 - confidence);
    let spearman_brown = |x: f64| x * kf / (1.0 + x * (kf - 1.0));
    let ci_average = (spearman_brown(ci_single.0), spearman_brown(ci_single.1));

    Ok(IccResult {
        icc_single: icc1,
        icc_average: icck,
        ci_single,
        ci_average,
        confidence,
        n_items: n,
        n_raters: k,
        ms_rows: msr,
        ms_cols: msc,
        ms_error: mse,
    })
}

fn ci_single_rater(icc: f64, msr: f64, msc: f64, mse: f64, n: f64, k: f64, alpha: f64) -> (f64, f64) {
    // Satterthwaite degrees of freedom, written with MSC/MSE cleared so that a
    // zero residual (perfectly additive grid) stays finite.
    let a = n * (1.0 + (k - 1.0) * icc) - k * icc;
    let vn = (k - 1.0) * (n - 1.0) * (k * icc * msc + a * mse).powi(2);
    let vd = (n - 1.0) * k * k * icc * icc * msc * msc + (a * mse).powi(2);
    if vd == 0.0 {
        // no rater and no residual variance: the estimate is exact
        return (icc, icc);
    }
    let v = vn / vd;
    if !(v > 0.0) {
        return (f64::NAN, f64::NAN);
    }
    let f_upper = f_quantile(1.0 - alpha / 2.0, n - 1.0, v);
    let f_lower = f_quantile(1.0 - alpha / 2.0, v, n - 1.0);
    let c = k * msc + (k * n - k - n) * mse;
    let lower = n * (msr - f_upper * mse) / (f_upper * c + n * msr);
    let upper = n * (f_lower * msr - mse) / (c + n * f_lower * msr);
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Mean squares from the total/row/column decomposition, SSE by subtraction.
    fn anova_oracle(grid: &[Vec<f64>]) -> (f64, f64) {
        let n = grid.len() as f64;
        let k = grid[0].len() as f64;
        let all: Vec<f64> = grid.iter().flatten().copied().collect();
        let grand = all.iter().sum::<f64>() / (n * k);
        let sst: f64 = all.iter().map(|x| (x - grand).powi(2)).sum();
        let mut ssr = 0.0;
        for row in grid {
            let m = row.iter().sum::<f64>() / k;
            ssr += k * (m - grand).powi(2);
        }
        let mut ssc = 0.0;
        for c in 0..grid[0].len() {
            let m = grid.iter().map(|r| r[c]).sum::<f64>() / n;
            ssc += n * (m - grand).powi(2);
        }
        let sse = sst - ssr - ssc;
        let (msr, msc, mse) = (ssr / (n - 1.0), ssc / (k - 1.0), sse / ((n - 1.0) * (k - 1.0)));
        (
            (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / n),
            (msr - mse) / (msr + (msc - mse) / n),
        )
    }

    #[test]
    fn three_by_two_hand_case() {
        let grid = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let r = icc_two_way(&grid, 0.95).unwrap();
        assert_abs_diff_eq!(r.ms_rows, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.ms_cols, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.ms_error, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.icc_single, 8.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.icc_average, 8.0 / 8.5, epsilon = 1e-12);
        assert!(r.ci_single.0 < r.icc_single && r.icc_single < r.ci_single.1);
        assert!(r.ci_average.0 < r.icc_average && r.icc_average < r.ci_average.1);
    }

    #[test]
    fn perfect_agreement_is_one() {
        let grid = vec![vec![3.0; 4], vec![7.0; 4], vec![1.0; 4]];
        let r = icc_two_way(&grid, 0.95).unwrap();
        assert_abs_diff_eq!(r.icc_single, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.icc_average, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.ci_single.0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_grids_are_errors() {
        assert_eq!(
            icc_two_way(&[vec![2.0; 3], vec![2.0; 3]], 0.95).unwrap_err(),
            StatsError::ZeroVariance
        );
        assert!(matches!(
            icc_two_way(&[vec![1.0, 2.0]], 0.95),
            Err(StatsError::GridTooSmall { .. })
        ));
        assert!(matches!(
            icc_two_way(&[vec![1.0, 2.0], vec![1.0]], 0.95),
            Err(StatsError::Shape(_))
        ));
    }

    #[test]
    fn random_grids_match_oracle_and_bracket() {
        let mut rng = crate::seed::rng(99);
        for _ in 0..200 {
            let n = rng.random_range(2..=25);
            let k = rng.random_range(2..=8);
            let item_effect: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..60.0)).collect();
            let grid: Vec<Vec<f64>> = item_effect
                .iter()
                .map(|&e| (0..k).map(|_| e + rng.random_range(-15.0..15.0)).collect())
                .collect();
            let r = icc_two_way(&grid, 0.95).unwrap();
            let (o1, ok) = anova_oracle(&grid);
            assert_abs_diff_eq!(r.icc_single, o1, epsilon = 1e-9);
            assert_abs_diff_eq!(r.icc_average, ok, epsilon = 1e-9);
            if r.icc_single > 0.0 {
                assert!(r.icc_average >= r.icc_single);
            }
            if r.icc_single > 0.0 {
                assert!(r.ci_single.0 <= r.icc_single && r.icc_single <= r.ci_single.1, "{r:?}");
            }
        }
    }

    #[test]
    fn level_bands() {
        assert_eq!(ReliabilityLevel::single_rater(0.701), ReliabilityLevel::Good);
        assert_eq!(ReliabilityLevel::single_rater(0.753), ReliabilityLevel::Excellent);
        assert_eq!(ReliabilityLevel::single_rater(0.685), ReliabilityLevel::Good);
        assert_eq!(ReliabilityLevel::mean_rating(0.920), ReliabilityLevel::Excellent);
        assert_eq!(ReliabilityLevel::mean_rating(0.8), ReliabilityLevel::Good);
        assert_eq!(ReliabilityLevel::mean_rating(0.3), ReliabilityLevel::Poor);
    }
}
