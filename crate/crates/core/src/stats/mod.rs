//! Rank statistics used to relate explainability metrics to performance.
//!
//! Everything here works on plain `&[f64]` samples. Ties are handled with
//! average (fractional) ranks throughout.

mod bootstrap;
mod mann_whitney;
mod spearman;

pub use bootstrap::{bootstrap_spearman, percentile_strata, BootstrapResult, ResampleMode, PRNG_ALGORITHM};
pub use mann_whitney::{mann_whitney_u, mann_whitney_u_with, MannWhitney, PValueMethod, EXACT_MAX_TOTAL};
pub use spearman::{
    spearman, spearman_permutation_p, spearman_rho, split_correlation, CorrelationResult, SplitCorrelation,
    Subcohort, PERMUTATION_MAX_N,
};

use crate::error::{Error, Result};

/// 1-based ascending ranks; tied values share the mean of their positions.
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
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Nearest-rank percentile: the `ceil(pct/100 * n)`-th smallest value.
pub fn percentile_threshold(values: &[f64], pct: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no values for percentile"));
    }
    if !(pct > 0.0 && pct < 100.0) {
        return Err(Error::ConfigInvalid(format!("percentile {pct} outside (0, 100)")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank_index(sorted.len(), pct)])
}

/// Zero-based index of the nearest-rank order statistic in a sorted sample.
pub(crate) fn nearest_rank_index(n: usize, pct: f64) -> usize {
    // pct * n first keeps integral products exact (80 * 5 / 100 = 4).
    let position = (pct * n as f64 / 100.0 - 1e-9).ceil() as usize;
    position.clamp(1, n) - 1
}

pub(crate) fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}
