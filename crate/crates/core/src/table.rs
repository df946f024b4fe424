//! The coalition game table: one metric value per (subject, fold, region, coalition).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::contrast::{coalition_from_names, Coalition, ContrastSet};
use crate::error::{Error, Result};

/// Label of the region-averaged attribution. Input tables may not use it.
pub const OVERALL_REGION: &str = "overall";

/// Accepted metric values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricRange {
    /// Dice-like metrics in `[0, 1]`.
    #[default]
    UnitInterval,
    /// Any finite real, for games that are not overlap scores.
    AnyFinite,
}

impl MetricRange {
    pub fn accepts(self, value: f64) -> bool {
        match self {
            MetricRange::UnitInterval => (0.0..=1.0).contains(&value),
            MetricRange::AnyFinite => value.is_finite(),
        }
    }
}

/// One parsed input row, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCell {
    pub subject_id: String,
    pub fold: u32,
    pub region: String,
    pub coalition: Vec<String>,
    pub metric: f64,
    /// Source line, when the row came from a file.
    pub row: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub subject_id: String,
    pub fold: u32,
    pub region: String,
}

impl CellKey {
    pub fn new(subject_id: impl Into<String>, fold: u32, region: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            fold,
            region: region.into(),
        }
    }
}

/// A validated, complete game table.
///
/// Every (subject, fold, region) cell holds all `2^n` coalition values,
/// stored densely and indexed by coalition mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    contrasts: ContrastSet,
    range: MetricRange,
    games: BTreeMap<CellKey, Vec<f64>>,
    subjects: Vec<String>,
    folds: Vec<u32>,
    regions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceSummary {
    pub subject_id: String,
    pub mean_dice: f64,
}

/// Validates raw rows into a complete table.
pub fn validate_metric_table<I>(
    raw: I,
    contrasts: &ContrastSet,
    range: MetricRange,
) -> Result<MetricTable>
where
    I: IntoIterator<Item = RawCell>,
{
    let width = contrasts.coalition_count();
    let mut partial: BTreeMap<CellKey, Vec<Option<f64>>> = BTreeMap::new();
    for cell in raw {
        let row = cell.row;
        let coalition = coalition_from_names(&cell.coalition, contrasts).map_err(|e| e.at_row(row))?;
        let key = CellKey::new(cell.subject_id, cell.fold, cell.region);
        if key.region == OVERALL_REGION {
            return Err(Error::ReservedRegion(key.region).at_row(row));
        }
        if !range.accepts(cell.metric) {
            return Err(Error::MetricOutOfRange {
                subject: key.subject_id,
                fold: key.fold,
                region: key.region,
                mask: coalition.mask(),
                value: cell.metric,
            }
            .at_row(row));
        }
        let slots = partial.entry(key.clone()).or_insert_with(|| vec![None; width]);
        let slot = &mut slots[coalition.mask() as usize];
        if slot.is_some() {
            return Err(Error::DuplicateCell {
                subject: key.subject_id,
                fold: key.fold,
                region: key.region,
                mask: coalition.mask(),
            }
            .at_row(row));
        }
        *slot = Some(cell.metric);
    }
    finish(contrasts.clone(), range, partial)
}

fn finish(
    contrasts: ContrastSet,
    range: MetricRange,
    partial: BTreeMap<CellKey, Vec<Option<f64>>>,
) -> Result<MetricTable> {
    let mut games = BTreeMap::new();
    for (key, slots) in partial {
        if let Some(mask) = slots.iter().position(Option::is_none) {
            return Err(Error::MissingCoalition {
                subject: key.subject_id,
                fold: key.fold,
                region: key.region,
                mask: mask as u32,
            });
        }
        games.insert(key, slots.into_iter().flatten().collect());
    }
    Ok(MetricTable::assemble(contrasts, range, games))
}

impl MetricTable {
    fn assemble(contrasts: ContrastSet, range: MetricRange, games: BTreeMap<CellKey, Vec<f64>>) -> Self {
        let subjects: BTreeSet<&String> = games.keys().map(|k| &k.subject_id).collect();
        let folds: BTreeSet<u32> = games.keys().map(|k| k.fold).collect();
        let regions: BTreeSet<&String> = games.keys().map(|k| &k.region).collect();
        let subjects = subjects.into_iter().cloned().collect();
        let folds = folds.into_iter().collect();
        let regions = regions.into_iter().cloned().collect();
        Self {
            contrasts,
            range,
            games,
            subjects,
            folds,
            regions,
        }
    }

    /// Builds a table from dense per-cell games (each indexed by mask).
    pub fn from_games<I>(contrasts: ContrastSet, range: MetricRange, games: I) -> Result<Self>
    where
        I: IntoIterator<Item = (CellKey, Vec<f64>)>,
    {
        let width = contrasts.coalition_count();
        let mut partial = BTreeMap::new();
        for (key, values) in games {
            if key.region == OVERALL_REGION {
                return Err(Error::ReservedRegion(key.region));
            }
            if values.len() != width {
                let mask = values.len().min(width) as u32;
                return Err(Error::MissingCoalition {
                    subject: key.subject_id,
                    fold: key.fold,
                    region: key.region,
                    mask,
                });
            }
            if let Some((mask, &value)) = values.iter().enumerate().find(|(_, v)| !range.accepts(**v)) {
                return Err(Error::MetricOutOfRange {
                    subject: key.subject_id,
                    fold: key.fold,
                    region: key.region,
                    mask: mask as u32,
                    value,
                });
            }
            if partial.contains_key(&key) {
                return Err(Error::DuplicateCell {
                    subject: key.subject_id,
                    fold: key.fold,
                    region: key.region,
                    mask: 0,
                });
            }
            partial.insert(key, values.into_iter().map(Some).collect());
        }
        finish(contrasts, range, partial)
    }

    pub fn contrasts(&self) -> &ContrastSet {
        &self.contrasts
    }

    pub fn range(&self) -> MetricRange {
        self.range
    }

    /// Subject ids, sorted.
    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    /// Fold ids present anywhere in the table, ascending.
    pub fn folds(&self) -> &[u32] {
        &self.folds
    }

    /// Region labels present anywhere in the table, sorted.
    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn game(&self, subject: &str, fold: u32, region: &str) -> Option<&[f64]> {
        self.games
            .get(&CellKey::new(subject, fold, region))
            .map(Vec::as_slice)
    }

    pub fn metric(&self, key: &CellKey, coalition: Coalition) -> Option<f64> {
        self.games
            .get(key)
            .and_then(|g| g.get(coalition.mask() as usize).copied())
    }

    /// All cells in key order (subject, fold, region).
    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &[f64])> {
        self.games.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn subject_cells<'a>(&'a self, subject: &'a str) -> impl Iterator<Item = (&'a CellKey, &'a [f64])> {
        self.cells().filter(move |(k, _)| k.subject_id == subject)
    }

    /// Regions recorded for a subject in any fold, sorted.
    pub fn subject_regions<'a>(&'a self, subject: &'a str) -> Vec<&'a str> {
        let set: BTreeSet<&str> = self.subject_cells(subject).map(|(k, _)| k.region.as_str()).collect();
        set.into_iter().collect()
    }

    /// Folds recorded for a subject in any region, ascending.
    pub fn subject_folds(&self, subject: &str) -> Vec<u32> {
        let set: BTreeSet<u32> = self.subject_cells(subject).map(|(k, _)| k.fold).collect();
        set.into_iter().collect()
    }

    /// Full-coalition metric averaged over regions within each fold, then over folds.
    pub fn dice_summary(&self, subject: &str) -> Option<DiceSummary> {
        let full = self.contrasts.full().mask() as usize;
        let mut per_fold: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for (key, game) in self.subject_cells(subject) {
            let entry = per_fold.entry(key.fold).or_insert((0.0, 0));
            entry.0 += game[full];
            entry.1 += 1;
        }
        if per_fold.is_empty() {
            return None;
        }
        let folds = per_fold.len() as f64;
        let mean_dice = per_fold.values().map(|(s, c)| s / *c as f64).sum::<f64>() / folds;
        Some(DiceSummary {
            subject_id: subject.to_string(),
            mean_dice,
        })
    }

    /// Flattens back to raw rows, coalitions in ascending mask order.
    pub fn to_raw_cells(&self) -> Vec<RawCell> {
        let mut out = Vec::with_capacity(self.games.len() * self.contrasts.coalition_count());
        for (key, game) in &self.games {
            for coalition in self.contrasts.coalitions() {
                out.push(RawCell {
                    subject_id: key.subject_id.clone(),
                    fold: key.fold,
                    region: key.region.clone(),
                    coalition: coalition.names(&self.contrasts).into_iter().map(String::from).collect(),
                    metric: game[coalition.mask() as usize],
                    row: None,
                });
            }
        }
        out
    }
}
