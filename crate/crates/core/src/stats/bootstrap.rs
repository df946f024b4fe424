use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{median, nearest_rank_index, percentile_threshold, spearman_rho};
use crate::error::{Error, Result};

/// Iteration `i` draws from `ChaCha8Rng::seed_from_u64(seed)` with its stream
/// set to `i`, so results do not depend on scheduling.
pub const PRNG_ALGORITHM: &str = "chacha8-seed_from_u64-stream_per_iteration";

const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Resample the whole cohort with replacement.
    Plain,
    /// Resample within each stratum, keeping stratum sizes.
    #[default]
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub iterations: usize,
    pub seed: u64,
    pub prng: String,
    pub mode: ResampleMode,
    pub rhos: Vec<f64>,
    pub mean_rho: f64,
    pub median_rho: f64,
    /// 2.5th percentile (nearest rank).
    pub ci_low: f64,
    /// 97.5th percentile (nearest rank).
    pub ci_high: f64,
    /// Resamples discarded because one side had zero variance.
    pub redraws: usize,
}

impl std::fmt::Display for ResampleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResampleMode::Plain => "plain",
            ResampleMode::Stratified => "stratified",
        })
    }
}

/// Stratum labels: `0` for values at or below the nearest-rank `pct`
/// percentile, `1` above it.
pub fn percentile_strata(values: &[f64], pct: f64) -> Result<(f64, Vec<usize>)> {
    let cut = percentile_threshold(values, pct)?;
    Ok((cut, values.iter().map(|&v| usize::from(v > cut)).collect()))
}

/// Bootstrap distribution of Spearman's rho over paired samples.
///
/// With `strata`, each group of equal labels is resampled with replacement to
/// its own size; without, the whole sample is. Resamples where either side is
/// constant are redrawn from the same stream.
pub fn bootstrap_spearman(
    x: &[f64],
    y: &[f64],
    iterations: usize,
    seed: u64,
    strata: Option<&[usize]>,
) -> Result<BootstrapResult> {
    if iterations == 0 {
        return Err(Error::ConfigInvalid("bootstrap needs at least one iteration".into()));
    }
    // Surfaces length, size and zero-variance problems of the full sample.
    spearman_rho(x, y)?;

    let groups: Vec<Vec<usize>> = match strata {
        Some(labels) => {
            if labels.len() != x.len() {
                return Err(Error::LengthMismatch {
                    left: x.len(),
                    right: labels.len(),
                });
            }
            let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &label) in labels.iter().enumerate() {
                by_label.entry(label).or_default().push(i);
            }
            by_label.into_values().collect()
        }
        None => vec![(0..x.len()).collect()],
    };
    let mode = if strata.is_some() {
        ResampleMode::Stratified
    } else {
        ResampleMode::Plain
    };

    let draws: Vec<(f64, usize)> = (0..iterations)
        .into_par_iter()
        .map(|iteration| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(iteration as u64);
            let mut xs = Vec::with_capacity(x.len());
            let mut ys = Vec::with_capacity(y.len());
            for redraws in 0..=MAX_REDRAWS {
                xs.clear();
                ys.clear();
                for group in &groups {
                    for _ in 0..group.len() {
                        let pick = group[rng.random_range(0..group.len())];
                        xs.push(x[pick]);
                        ys.push(y[pick]);
                    }
                }
                match spearman_rho(&xs, &ys) {
                    Ok(rho) => return Ok((rho, redraws)),
                    Err(Error::ZeroVariance(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::DegenerateResample {
                iteration,
                redraws: MAX_REDRAWS,
            })
        })
        .collect::<Result<_>>()?;

    let rhos: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let redraws = draws.iter().map(|d| d.1).sum();
    let mut sorted = rhos.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        iterations,
        seed,
        prng: PRNG_ALGORITHM.to_string(),
        mode,
        mean_rho: rhos.iter().sum::<f64>() / iterations as f64,
        median_rho: median(&sorted),
        ci_low: sorted[nearest_rank_index(iterations, 2.5)],
        ci_high: sorted[nearest_rank_index(iterations, 97.5)],
        rhos,
        redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlation_survives_resampling() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let r = bootstrap_spearman(&x, &x, 1, 7, None).unwrap();
        assert_eq!(r.rhos, vec![1.0]);
        assert_eq!((r.ci_low, r.ci_high), (1.0, 1.0));
        assert_eq!(r.mode, ResampleMode::Plain);
    }

    #[test]
    fn same_seed_same_result() {
        let x: Vec<f64> = (0..30).map(|i| f64::from(i * 7 % 11)).collect();
        let y: Vec<f64> = (0..30).map(|i| f64::from(i * 5 % 13)).collect();
        let a = bootstrap_spearman(&x, &y, 200, 99, None).unwrap();
        let b = bootstrap_spearman(&x, &y, 200, 99, None).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_spearman(&x, &y, 200, 100, None).unwrap();
        assert_ne!(a.rhos, c.rhos);
        assert!(a.ci_low <= a.ci_high);
    }

    #[test]
    fn stratified_keeps_stratum_sizes() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let (cut, labels) = percentile_strata(&x, 80.0).unwrap();
        assert_eq!(cut, 15.0);
        assert_eq!(labels.iter().filter(|l| **l == 1).count(), 4);
        let r = bootstrap_spearman(&x, &y, 50, 3, Some(&labels)).unwrap();
        assert_eq!(r.mode, ResampleMode::Stratified);
        assert!(r.rhos.iter().all(|rho| *rho == -1.0));
    }

    #[test]
    fn zero_variance_input_is_an_error() {
        let x = vec![0.0; 10];
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(bootstrap_spearman(&x, &y, 10, 1, None), Err(Error::ZeroVariance("x"))));
        assert!(bootstrap_spearman(&y, &y, 0, 1, None).is_err());
    }

    #[test]
    fn degenerate_draws_are_redrawn() {
        // one distinct outlier: many resamples of 4 are constant in x
        let x = [0.0, 0.0, 0.0, 1.0];
        let y = [0.1, 0.2, 0.3, 0.4];
        let r = bootstrap_spearman(&x, &y, 100, 11, None).unwrap();
        assert!(r.redraws > 0);
        assert_eq!(r.rhos.len(), 100);
    }
}
