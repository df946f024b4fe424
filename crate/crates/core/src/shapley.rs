//! Exact contrast-level Shapley values over complete coalition games.
//!
//! A game is a dense slice of `2^n` metric values indexed by coalition mask.
//! [`shapley_values`] enumerates every coalition once; the permutation form in
//! [`permutation_shapley_values`] is kept as an independent check.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::MAX_CONTRASTS;
use crate::error::{Error, Result};
use crate::table::{MetricTable, OVERALL_REGION};

/// Largest `n` the `n!` permutation oracle accepts.
pub const MAX_ORACLE_CONTRASTS: usize = 8;

/// Shapley values of every contrast for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub subject_id: String,
    /// `None` for records averaged over folds.
    pub fold: Option<u32>,
    pub region: String,
    pub phi: Vec<f64>,
}

/// `|S|! (n - |S| - 1)! / n!` for every coalition size `|S|` in `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyWeightTable {
    n: usize,
    numerators: Vec<u64>,
    denominator: u64,
    weights: Vec<f64>,
}

fn factorial(k: usize) -> u64 {
    (1..=k as u64).product()
}

impl ShapleyWeightTable {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_CONTRASTS {
            return Err(Error::InvalidContrastSet(format!(
                "weight table needs 1..={MAX_CONTRASTS} players, got {n}"
            )));
        }
        let denominator = factorial(n);
        let numerators: Vec<u64> = (0..n).map(|s| factorial(s) * factorial(n - s - 1)).collect();
        let weights = numerators
            .iter()
            .map(|&num| num as f64 / denominator as f64)
            .collect();
        Ok(Self {
            n,
            numerators,
            denominator,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, size: usize) -> f64 {
        self.weights[size]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Exact weight as `(numerator, n!)`.
    pub fn exact(&self, size: usize) -> (u64, u64) {
        (self.numerators[size], self.denominator)
    }
}

fn players(game: &[f64]) -> Result<usize> {
    let len = game.len();
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::InvalidContrastSet(format!(
            "game of length {len} is not 2^n for n >= 1"
        )));
    }
    let n = len.trailing_zeros() as usize;
    if n > MAX_CONTRASTS {
        return Err(Error::InvalidContrastSet(format!("{n} players exceeds {MAX_CONTRASTS}")));
    }
    Ok(n)
}

/// Shapley values of a dense game by weighted enumeration of coalitions.
///
/// Marginal contributions are summed per coalition size in ascending mask
/// order before weighting, so the result is bit-reproducible and players
/// with identical marginals get identical values.
pub fn shapley_values(game: &[f64]) -> Result<Vec<f64>> {
    let n = players(game)?;
    let weights = ShapleyWeightTable::new(n)?;
    Ok(shapley_with_weights(game, &weights))
}

pub(crate) fn shapley_with_weights(game: &[f64], weights: &ShapleyWeightTable) -> Vec<f64> {
    let n = weights.n();
    let mut by_size = vec![0.0; n];
    (0..n)
        .map(|i| {
            let bit = 1usize << i;
            by_size.iter_mut().for_each(|v| *v = 0.0);
            for mask in (0..game.len()).filter(|m| m & bit == 0) {
                by_size[mask.count_ones() as usize] += game[mask | bit] - game[mask];
            }
            by_size
                .iter()
                .enumerate()
                .map(|(size, total)| weights.weight(size) * total)
                .sum()
        })
        .collect()
}

/// Shapley values as the mean marginal contribution over all `n!` orderings.
pub fn permutation_shapley_values(game: &[f64]) -> Result<Vec<f64>> {
    let n = players(game)?;
    if n > MAX_ORACLE_CONTRASTS {
        return Err(Error::NTooLargeForOracle {
            n,
            max: MAX_ORACLE_CONTRASTS,
        });
    }
    let mut phi = vec![0.0; n];
    let mut orderings = 0u64;
    for order in (0..n).permutations(n) {
        let mut mask = 0usize;
        for &player in &order {
            let next = mask | (1 << player);
            phi[player] += game[next] - game[mask];
            mask = next;
        }
        orderings += 1;
    }
    phi.iter_mut().for_each(|v| *v /= orderings as f64);
    Ok(phi)
}

fn cell_game<'a>(table: &'a MetricTable, subject: &str, fold: u32, region: &str) -> Result<&'a [f64]> {
    table
        .game(subject, fold, region)
        .ok_or_else(|| Error::IncompleteCell {
            subject: subject.to_string(),
            fold,
            region: region.to_string(),
        })
}

pub fn shapley_exact(table: &MetricTable, subject: &str, fold: u32, region: &str) -> Result<AttributionRecord> {
    let game = cell_game(table, subject, fold, region)?;
    Ok(AttributionRecord {
        subject_id: subject.to_string(),
        fold: Some(fold),
        region: region.to_string(),
        phi: shapley_values(game)?,
    })
}

pub fn shapley_permutation_oracle(
    table: &MetricTable,
    subject: &str,
    fold: u32,
    region: &str,
) -> Result<AttributionRecord> {
    let game = cell_game(table, subject, fold, region)?;
    Ok(AttributionRecord {
        subject_id: subject.to_string(),
        fold: Some(fold),
        region: region.to_string(),
        phi: permutation_shapley_values(game)?,
    })
}

/// Exact attributions for every cell of the table, in key order.
pub fn attribute_table(table: &MetricTable) -> Vec<AttributionRecord> {
    let weights = ShapleyWeightTable::new(table.contrasts().len()).expect("contrast set is bounded");
    let cells: Vec<_> = table.cells().collect();
    cells
        .par_iter()
        .map(|(key, game)| AttributionRecord {
            subject_id: key.subject_id.clone(),
            fold: Some(key.fold),
            region: key.region.clone(),
            phi: shapley_with_weights(game, &weights),
        })
        .collect()
}

fn elementwise_mean<'a, I>(rows: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = rows.into_iter();
    let first = iter.next().ok_or(Error::EmptyInput("no records to average"))?;
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for row in iter {
        if row.len() != sum.len() {
            return Err(Error::MismatchedContrasts);
        }
        sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        count += 1;
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    Ok(sum)
}

/// Unweighted mean of per-region records for one subject and fold,
/// relabelled as the `overall` region.
pub fn aggregate_overall(records: &[AttributionRecord]) -> Result<AttributionRecord> {
    let first = records.first().ok_or(Error::EmptyInput("no region records"))?;
    let phi = elementwise_mean(records.iter().map(|r| r.phi.as_slice()))?;
    Ok(AttributionRecord {
        subject_id: first.subject_id.clone(),
        fold: first.fold,
        region: OVERALL_REGION.to_string(),
        phi,
    })
}

/// Elementwise mean of per-fold records for one subject and region.
pub fn mean_over_folds(records: &[AttributionRecord]) -> Result<Vec<f64>> {
    elementwise_mean(records.iter().map(|r| r.phi.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(phi: &[f64]) -> AttributionRecord {
        AttributionRecord {
            subject_id: "s".into(),
            fold: Some(0),
            region: "r".into(),
            phi: phi.to_vec(),
        }
    }

    #[test]
    fn two_player_hand_enumeration() {
        // D(∅)=0, D({1})=0.4, D({2})=0.2, D({1,2})=0.7
        let game = [0.0, 0.4, 0.2, 0.7];
        let expected = [0.5 * 0.4 + 0.5 * (0.7 - 0.2), 0.5 * 0.2 + 0.5 * (0.7 - 0.4)];
        for phi in [shapley_values(&game).unwrap(), permutation_shapley_values(&game).unwrap()] {
            assert!((phi[0] - 0.45).abs() < 1e-12 && (phi[0] - expected[0]).abs() < 1e-15);
            assert!((phi[1] - 0.25).abs() < 1e-12 && (phi[1] - expected[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_game_is_all_zero() {
        let game = vec![0.5; 16];
        assert_eq!(shapley_values(&game).unwrap(), vec![0.0; 4]);
        assert_eq!(permutation_shapley_values(&game).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn additive_game_recovers_weights() {
        let w = [0.1, 0.2, 0.3, 0.4];
        let game: Vec<f64> = (0..16usize)
            .map(|m| (0..4).filter(|i| m & (1 << i) != 0).map(|i| w[i]).sum())
            .collect();
        let phi = shapley_values(&game).unwrap();
        for (p, w) in phi.iter().zip(w) {
            assert!((p - w).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_table_matches_closed_form() {
        let t = ShapleyWeightTable::new(4).unwrap();
        assert_eq!(t.weights(), &[0.25, 1.0 / 12.0, 1.0 / 12.0, 0.25]);
        assert_eq!(t.exact(1), (2, 24));
        assert!(ShapleyWeightTable::new(0).is_err());
        assert!(ShapleyWeightTable::new(17).is_err());
    }

    #[test]
    fn weight_table_normalizes_exactly() {
        for n in 1..=16usize {
            let t = ShapleyWeightTable::new(n).unwrap();
            let mut total: u128 = 0;
            let mut binom: u128 = 1;
            for s in 0..n {
                let (num, den) = t.exact(s);
                assert_eq!(den, factorial(n));
                total += binom * num as u128;
                binom = binom * (n - 1 - s) as u128 / (s + 1) as u128;
            }
            assert_eq!(total, factorial(n) as u128, "n = {n}");
        }
    }

    #[test]
    fn malformed_games_rejected() {
        assert!(shapley_values(&[0.1]).is_err());
        assert!(shapley_values(&[0.1, 0.2, 0.3]).is_err());
        assert!(matches!(
            permutation_shapley_values(&vec![0.0; 1 << 9]),
            Err(Error::NTooLargeForOracle { n: 9, .. })
        ));
    }

    #[test]
    fn overall_is_unweighted_region_mean() {
        let out = aggregate_overall(&[record(&[0.1, 0.0, 0.0, 0.0]), record(&[0.3, 0.0, 0.0, 0.0])]).unwrap();
        assert!((out.phi[0] - 0.2).abs() < 1e-15);
        assert_eq!(out.region, OVERALL_REGION);

        let single = aggregate_overall(&[record(&[0.1, 0.2, 0.3, 0.4])]).unwrap();
        assert_eq!(single.phi, vec![0.1, 0.2, 0.3, 0.4]);

        let three = aggregate_overall(&[record(&[0.1]), record(&[0.2]), record(&[0.6])]).unwrap();
        assert!((three.phi[0] - 0.3).abs() < 1e-15);

        assert!(matches!(aggregate_overall(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(
            aggregate_overall(&[record(&[0.1]), record(&[0.1, 0.2])]),
            Err(Error::MismatchedContrasts)
        ));
    }

    #[test]
    fn fold_mean() {
        let m = mean_over_folds(&[record(&[0.2, 0.0, 0.0, 0.0]), record(&[0.4, 0.0, 0.0, 0.0])]).unwrap();
        assert!((m[0] - 0.3).abs() < 1e-15);
        assert_eq!(mean_over_folds(&[record(&[0.7, 0.1])]).unwrap(), vec![0.7, 0.1]);
        let five: Vec<_> = [0.1, 0.2, 0.3, 0.4, 0.5].iter().map(|v| record(&[*v])).collect();
        assert!((mean_over_folds(&five).unwrap()[0] - 0.3).abs() < 1e-15);
        assert!(mean_over_folds(&[]).is_err());
    }
}
