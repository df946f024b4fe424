//! Agreement between model and reference contrast rankings.
//!
//! Agreement is the normalized Spearman footrule: one minus the summed
//! absolute rank displacement over its maximum for permutations of `n`
//! items, `floor(n^2 / 2)` (8 for four contrasts).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::RankVector;
use crate::stats::{mann_whitney_u, MannWhitney};

/// Significance level for the per-bin comparisons.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub subject_id: String,
    pub reference_label: String,
    pub nsf: f64,
    pub mean_dice: f64,
}

/// Largest footrule distance between two permutations of `n` items.
pub fn max_footrule(n: usize) -> u64 {
    (n * n / 2) as u64
}

/// Raw footrule distance `sum |a_i - b_i|`.
pub fn footrule(a: &RankVector, b: &RankVector) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.ranks()
        .iter()
        .zip(b.ranks())
        .map(|(x, y)| u64::from(x.abs_diff(*y)))
        .sum())
}

/// Normalized Spearman footrule in `[0, 1]`; 1 is perfect agreement.
pub fn nsf(model: &RankVector, reference: &RankVector) -> Result<f64> {
    let distance = footrule(model, reference)?;
    let n = model.len();
    if n < 2 {
        return Err(Error::NTooSmall { n, min: 2 });
    }
    let value = 1.0 - distance as f64 / max_footrule(n) as f64;
    if !(0.0..=1.0).contains(&value) {
        log::warn!("footrule {distance} exceeds the permutation maximum for n = {n}; clamping");
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Dice interval `[lo, hi)`, or `[lo, hi]` when `closed` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceBin {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub closed: bool,
}

impl DiceBin {
    pub fn new(label: impl Into<String>, lo: f64, hi: f64, closed: bool) -> Self {
        Self {
            label: label.into(),
            lo,
            hi,
            closed,
        }
    }

    pub fn contains(&self, dice: f64) -> bool {
        dice >= self.lo && (dice < self.hi || (self.closed && dice == self.hi))
    }
}

/// `<0.5` baseline, then tenths from 0.5 up to a closed 0.9-1.0 bin.
pub fn default_dice_bins() -> Vec<DiceBin> {
    let mut bins = vec![DiceBin::new("<0.5", 0.0, 0.5, false)];
    for tenth in 5..10u32 {
        let lo = f64::from(tenth) / 10.0;
        let hi = f64::from(tenth + 1) / 10.0;
        bins.push(DiceBin::new(format!("{lo:.1}-{hi:.1}"), lo, hi, tenth == 9));
    }
    bins
}

/// Index of the baseline bin in [`default_dice_bins`].
pub const DEFAULT_BASELINE_BIN: usize = 0;

pub fn check_bins(bins: &[DiceBin], baseline: usize) -> Result<()> {
    if baseline >= bins.len() {
        return Err(Error::ConfigInvalid(format!(
            "baseline bin {baseline} out of {} bins",
            bins.len()
        )));
    }
    for bin in bins {
        if !(bin.lo.is_finite() && bin.hi.is_finite() && bin.lo < bin.hi) {
            return Err(Error::ConfigInvalid(format!("bin `{}` is not a proper interval", bin.label)));
        }
    }
    let mut sorted: Vec<&DiceBin> = bins.iter().collect();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    for pair in sorted.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.hi > b.lo || (a.closed && a.hi == b.lo) {
            return Err(Error::ConfigInvalid(format!(
                "bins `{}` and `{}` overlap",
                a.label, b.label
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStatus {
    Baseline,
    Compared,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub bin: DiceBin,
    pub status: BinStatus,
    pub n: usize,
    pub median_nsf: Option<f64>,
    /// Bin NSF values (`u_a`) against the baseline (`u_b`).
    pub test: Option<MannWhitney>,
    pub significant: Option<bool>,
}

fn median_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(crate::stats::median(&sorted))
}

/// Two-sided Mann-Whitney comparison of each bin's NSF values against the
/// baseline bin. Empty bins are reported, not fatal.
pub fn group_agreement_comparison(
    records: &[AgreementRecord],
    bins: &[DiceBin],
    baseline: usize,
) -> Result<Vec<BinComparison>> {
    check_bins(bins, baseline)?;
    let members = |bin: &DiceBin| -> Vec<f64> {
        records
            .iter()
            .filter(|r| bin.contains(r.mean_dice))
            .map(|r| r.nsf)
            .collect()
    };
    let base_values = members(&bins[baseline]);
    if base_values.is_empty() {
        return Err(Error::EmptyBaseline(bins[baseline].label.clone()));
    }
    bins.iter()
        .enumerate()
        .map(|(i, bin)| {
            let values = members(bin);
            let (status, test) = if i == baseline {
                (BinStatus::Baseline, None)
            } else if values.is_empty() {
                (BinStatus::Empty, None)
            } else {
                (BinStatus::Compared, Some(mann_whitney_u(&values, &base_values)?))
            };
            Ok(BinComparison {
                bin: bin.clone(),
                status,
                n: values.len(),
                median_nsf: median_of(&values),
                significant: test.map(|t| t.p_value < SIGNIFICANCE_LEVEL),
                test,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(r: &[u32]) -> RankVector {
        RankVector::new(r.to_vec()).unwrap()
    }

    fn rec(nsf: f64, dice: f64) -> AgreementRecord {
        AgreementRecord {
            subject_id: format!("s{dice}"),
            reference_label: "ref".into(),
            nsf,
            mean_dice: dice,
        }
    }

    #[test]
    fn nsf_examples() {
        assert_eq!(nsf(&rv(&[1, 2, 3, 4]), &rv(&[1, 2, 3, 4])).unwrap(), 1.0);
        assert_eq!(nsf(&rv(&[1, 2, 3, 4]), &rv(&[4, 3, 2, 1])).unwrap(), 0.0);
        assert_eq!(nsf(&rv(&[1, 2, 3, 4]), &rv(&[1, 2, 3, 3])).unwrap(), 0.875);
    }

    #[test]
    fn max_footrule_matches_four_contrasts() {
        assert_eq!(max_footrule(4), 8);
        assert_eq!(max_footrule(3), 4);
        assert_eq!(max_footrule(5), 12);
    }

    #[test]
    fn nsf_errors() {
        assert!(matches!(nsf(&rv(&[1, 2]), &rv(&[1, 2, 3])), Err(Error::LengthMismatch { .. })));
        assert!(matches!(nsf(&rv(&[1]), &rv(&[1])), Err(Error::NTooSmall { .. })));
    }

    #[test]
    fn default_bins_cover_unit_interval() {
        let bins = default_dice_bins();
        assert_eq!(bins.len(), 6);
        check_bins(&bins, DEFAULT_BASELINE_BIN).unwrap();
        assert!(bins[0].contains(0.0) && !bins[0].contains(0.5));
        assert!(bins[1].contains(0.5));
        assert!(bins[5].contains(1.0) && bins[5].contains(0.9));
        assert_eq!(bins[3].label, "0.7-0.8");
    }

    #[test]
    fn overlapping_bins_rejected() {
        let bins = vec![DiceBin::new("a", 0.0, 0.6, false), DiceBin::new("b", 0.5, 1.0, true)];
        assert!(check_bins(&bins, 0).is_err());
        assert!(check_bins(&default_dice_bins(), 9).is_err());
    }

    #[test]
    fn separated_bins_exact_p() {
        let records = vec![rec(0.1, 0.2), rec(0.2, 0.3), rec(0.8, 0.85), rec(0.9, 0.87)];
        let out = group_agreement_comparison(&records, &default_dice_bins(), 0).unwrap();
        let high = &out[4];
        assert_eq!(high.status, BinStatus::Compared);
        let test = high.test.unwrap();
        assert_eq!(test.u, 0.0);
        assert_eq!(test.p_value, 1.0 / 3.0);
        assert_eq!(high.significant, Some(false));
        assert_eq!(out[0].status, BinStatus::Baseline);
        assert_eq!(out[0].median_nsf, Some(0.15000000000000002));
        assert_eq!(out[1].status, BinStatus::Empty);
        assert!(out[1].test.is_none());
    }

    #[test]
    fn identical_bin_has_p_one() {
        let records = vec![rec(0.5, 0.1), rec(0.75, 0.2), rec(0.5, 0.95), rec(0.75, 0.96)];
        let out = group_agreement_comparison(&records, &default_dice_bins(), 0).unwrap();
        assert_eq!(out[5].test.unwrap().p_value, 1.0);
    }

    #[test]
    fn empty_baseline_is_fatal() {
        let records = vec![rec(0.5, 0.9)];
        assert!(matches!(
            group_agreement_comparison(&records, &default_dice_bins(), 0),
            Err(Error::EmptyBaseline(_))
        ));
    }
}
