use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::fractional_ranks;
use crate::error::{Error, Result};

/// Exact p-values are used up to this many pooled observations.
pub const EXACT_MAX_TOTAL: usize = 20;

/// Hard cap for forced exact enumeration (`C(100, 50)` still fits a `u128`).
const EXACT_HARD_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Chosen by sample size and ties.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `min(u_a, u_b)`.
    pub u: f64,
    pub u_a: f64,
    pub u_b: f64,
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Two-sided Mann-Whitney U test.
///
/// The p-value is exact when the pooled sample has at most
/// [`EXACT_MAX_TOTAL`] values and no value is shared between the groups;
/// otherwise it uses the normal approximation with tie correction and
/// continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    mann_whitney_u_with(a, b, PValueMethod::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: PValueMethod) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyGroup);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = fractional_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u_a = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;

    let method = match method {
        PValueMethod::Auto => {
            let cross_ties = a.iter().any(|x| b.contains(x));
            if na + nb <= EXACT_MAX_TOTAL && !cross_ties {
                PValueMethod::Exact
            } else {
                PValueMethod::Normal
            }
        }
        PValueMethod::Exact if na + nb > EXACT_HARD_CAP => {
            return Err(Error::ConfigInvalid(format!(
                "exact Mann-Whitney limited to {EXACT_HARD_CAP} observations"
            )))
        }
        m => m,
    };
    let p_value = match method {
        PValueMethod::Exact => exact_p(&ranks, na, rank_sum_a),
        _ => normal_p(&ranks, na, nb, u_a),
    };
    Ok(MannWhitney {
        u: u_a.min(u_b),
        u_a,
        u_b,
        p_value,
        method,
    })
}

/// Share of all `C(N, na)` labelings of the pooled ranks whose U lies at
/// least as far from its mean as the observed U.
fn exact_p(ranks: &[f64], na: usize, rank_sum_a: f64) -> f64 {
    // Average ranks are multiples of 1/2, so doubled ranks are integers.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: number of k-subsets with doubled rank sum s
    let mut counts = vec![vec![0u128; max_sum + 1]; na + 1];
    counts[0][0] = 1;
    for (seen, &r) in doubled.iter().enumerate() {
        for k in (1..=na.min(seen + 1)).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let (from, to) = (&lower[k - 1], &mut upper[0]);
            for s in (r..=max_sum).rev() {
                to[s] += from[s - r];
            }
        }
    }
    // Doubled U relative to its mean: 2W - na(na+1) - na*nb = 2W - na*(N+1).
    let n_total = ranks.len();
    let centre = (na * (n_total + 1)) as i64;
    let observed = ((2.0 * rank_sum_a).round() as i64 - centre).abs();
    let (mut extreme, mut total) = (0u128, 0u128);
    for (s, &c) in counts[na].iter().enumerate() {
        total += c;
        if (s as i64 - centre).abs() >= observed {
            extreme += c;
        }
    }
    (extreme as f64 / total as f64).min(1.0)
}

fn normal_p(ranks: &[f64], na: usize, nb: usize, u_a: f64) -> f64 {
    let n = (na + nb) as f64;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let (fa, fb) = (na as f64, nb as f64);
    let variance = fa * fb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let mean = fa * fb / 2.0;
    let z = ((u_a - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.sf(z)).min(1.0)
}
