//! Interfold Shapley-rank variance.
//!
//! For one region, each fold ranks the contrasts by their Shapley values; the
//! sample variance (`1/(K-1)`) of every contrast's rank across the `K` folds is
//! averaged over contrasts to give `v`. A subject's overall `V` is the mean of
//! `v` over its regions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{dense_rank_desc, RankVector};
use crate::shapley::{shapley_with_weights, ShapleyWeightTable};
use crate::table::MetricTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecord {
    pub subject_id: String,
    pub per_region_v: BTreeMap<String, f64>,
    pub overall_v: f64,
    pub mean_dice: f64,
}

/// Mean over contrasts of the across-fold sample variance of each contrast's rank.
/// `ranks_per_fold` holds one rank vector per fold.
pub fn rank_variance(ranks_per_fold: &[RankVector]) -> Result<f64> {
    let k = ranks_per_fold.len();
    if k < 2 {
        return Err(Error::TooFewFolds(k));
    }
    let n = ranks_per_fold[0].len();
    if let Some(bad) = ranks_per_fold.iter().find(|r| r.len() != n) {
        return Err(Error::LengthMismatch {
            left: n,
            right: bad.len(),
        });
    }
    let total: f64 = (0..n)
        .map(|i| {
            let column = ranks_per_fold.iter().map(|r| f64::from(r.ranks()[i]));
            let mean = column.clone().sum::<f64>() / k as f64;
            column.map(|r| (r - mean) * (r - mean)).sum::<f64>() / (k - 1) as f64
        })
        .sum();
    Ok(total / n as f64)
}

/// Rank variance per region for one subject, from per-fold sub-region Shapley rankings.
pub fn subject_variance(table: &MetricTable, subject: &str, tie_epsilon: f64) -> Result<VarianceRecord> {
    let folds = table.folds();
    if folds.len() < 2 {
        return Err(Error::TooFewFolds(folds.len()));
    }
    let regions = table.subject_regions(subject);
    if regions.is_empty() {
        return Err(Error::UnknownSubject(subject.to_string()));
    }
    let weights = ShapleyWeightTable::new(table.contrasts().len())?;
    let mut per_region_v = BTreeMap::new();
    for region in regions {
        let ranks = folds
            .iter()
            .map(|&fold| {
                let game = table.game(subject, fold, region).ok_or_else(|| Error::SubjectMissingFolds {
                    subject: subject.to_string(),
                    region: region.to_string(),
                })?;
                dense_rank_desc(&shapley_with_weights(game, &weights), tie_epsilon)
            })
            .collect::<Result<Vec<_>>>()?;
        per_region_v.insert(region.to_string(), rank_variance(&ranks)?);
    }
    let overall_v = per_region_v.values().sum::<f64>() / per_region_v.len() as f64;
    let mean_dice = table
        .dice_summary(subject)
        .map(|d| d.mean_dice)
        .ok_or_else(|| Error::UnknownSubject(subject.to_string()))?;
    Ok(VarianceRecord {
        subject_id: subject.to_string(),
        per_region_v,
        overall_v,
        mean_dice,
    })
}
