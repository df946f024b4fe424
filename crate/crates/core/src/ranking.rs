//! Dense rankings of contrasts, annotator consensus and reference rankings.

use serde::{Deserialize, Serialize};

use crate::contrast::ContrastSet;
use crate::error::{Error, Result};

/// Dense ranks over a contrast set: rank 1 is most important and the distinct
/// ranks are exactly `1..=d` with no gaps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct RankVector(Vec<u32>);

impl RankVector {
    pub fn new(ranks: Vec<u32>) -> Result<Self> {
        let n = ranks.len();
        if n == 0 {
            return Err(Error::InvalidRankVector("empty".into()));
        }
        let mut seen = vec![false; n + 1];
        for &r in &ranks {
            if r == 0 || r as usize > n {
                return Err(Error::InvalidRankVector(format!("rank {r} outside 1..={n}")));
            }
            seen[r as usize] = true;
        }
        let distinct = seen.iter().filter(|s| **s).count();
        if !seen[1..=distinct].iter().all(|s| *s) {
            return Err(Error::InvalidRankVector(format!("ranks {ranks:?} are not dense")));
        }
        Ok(Self(ranks))
    }

    pub fn ranks(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of distinct ranks.
    pub fn depth(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }
}

impl TryFrom<Vec<u32>> for RankVector {
    type Error = Error;

    fn try_from(ranks: Vec<u32>) -> Result<Self> {
        Self::new(ranks)
    }
}

impl From<RankVector> for Vec<u32> {
    fn from(r: RankVector) -> Self {
        r.0
    }
}

/// A named ranking that model rankings are compared against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceRanking {
    pub label: String,
    pub ranks: RankVector,
}

pub const CLINICAL_STANDARD: &str = "clinical_standard";
pub const ANNOTATOR_CONSENSUS: &str = "annotator_consensus";

/// Dense ranks with rank 1 for the largest value.
///
/// After sorting, adjacent values no more than `tie_epsilon` apart share a
/// group; groups chain, so `a ~ b` and `b ~ c` tie all three.
pub fn dense_rank_desc(values: &[f64], tie_epsilon: f64) -> Result<RankVector> {
    if values.iter().any(|v| !v.is_finite()) || !tie_epsilon.is_finite() || tie_epsilon < 0.0 {
        return Err(Error::NonFiniteInput);
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to rank"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0u32; values.len()];
    let mut rank = 1u32;
    for (pos, &idx) in order.iter().enumerate() {
        if pos > 0 && values[order[pos - 1]] - values[idx] > tie_epsilon {
            rank += 1;
        }
        ranks[idx] = rank;
    }
    Ok(RankVector(ranks))
}

/// Dense ranks with rank 1 for the smallest key; equal keys tie.
fn dense_rank_asc<T: Ord + Copy>(keys: &[T]) -> RankVector {
    let mut distinct: Vec<T> = keys.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    RankVector(
        keys.iter()
            .map(|k| distinct.binary_search(k).expect("key present") as u32 + 1)
            .collect(),
    )
}

/// Per-contrast mean rank across annotators, re-ranked densely (smaller mean
/// first). Means are compared through integer rank sums, which is exact
/// because every contrast is averaged over the same annotator count.
pub fn consensus_rank(annotators: &[RankVector]) -> Result<RankVector> {
    let first = annotators.first().ok_or(Error::EmptyInput("no annotator rankings"))?;
    let n = first.len();
    let mut sums = vec![0u64; n];
    for a in annotators {
        if a.len() != n {
            return Err(Error::LengthMismatch { left: n, right: a.len() });
        }
        sums.iter_mut().zip(a.ranks()).for_each(|(s, r)| *s += u64::from(*r));
    }
    Ok(dense_rank_asc(&sums))
}

/// The protocol ordering T1c > T2f > T1n = T2w, laid out in the set's order.
pub fn clinical_standard(contrasts: &ContrastSet) -> Result<ReferenceRanking> {
    const ORDER: [(&str, u32); 4] = [("T1c", 1), ("T2f", 2), ("T1n", 3), ("T2w", 3)];
    for (name, _) in ORDER {
        if contrasts.index_of(name).is_none() {
            return Err(Error::UnknownContrast(name.to_string()));
        }
    }
    let ranks = contrasts
        .names()
        .iter()
        .map(|name| {
            ORDER
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, r)| *r)
                .ok_or_else(|| Error::UnknownContrast(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceRanking {
        label: CLINICAL_STANDARD.to_string(),
        ranks: RankVector::new(ranks)?,
    })
}
