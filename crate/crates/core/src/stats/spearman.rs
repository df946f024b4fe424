use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::fractional_ranks;
use crate::error::{Error, Result};

/// Largest sample the exhaustive permutation p-value accepts (`10!` orderings).
pub const PERMUTATION_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::TooFewSamples { n: x.len(), min: 3 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

fn centered(values: &[f64]) -> (Vec<f64>, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss = dev.iter().map(|d| d * d).sum();
    (dev, ss)
}

fn rank_pearson(rx: &[f64], ry: &[f64]) -> Result<f64> {
    let (dx, sxx) = centered(rx);
    let (dy, syy) = centered(ry);
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    let sxy: f64 = dx.iter().zip(&dy).map(|(a, b)| a * b).sum();
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho without a p-value.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    rank_pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Spearman's rho (Pearson correlation of average ranks) with a two-sided
/// p-value from the t approximation on `n - 2` degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    let rho = spearman_rho(x, y)?;
    let n = x.len();
    Ok(CorrelationResult {
        rho,
        p_value: t_approx_p(rho, n),
        n,
    })
}

fn t_approx_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Exact two-sided permutation p-value for Spearman's rho: the share of all
/// `n!` pairings whose |rho| reaches the observed |rho|.
pub fn spearman_permutation_p(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    if n > PERMUTATION_MAX_N {
        return Err(Error::NTooLargeForOracle {
            n,
            max: PERMUTATION_MAX_N,
        });
    }
    let (dx, sxx) = centered(&fractional_ranks(x));
    let (mut dy, syy) = centered(&fractional_ranks(y));
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance(if sxx == 0.0 { "x" } else { "y" }));
    }
    let cross = |dy: &[f64]| dx.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
    let observed = cross(&dy).abs() - 1e-9 * (sxx * syy).sqrt();
    let mut hits = 0u64;
    let mut total = 0u64;
    // Heap's algorithm, iterative
    let mut c = vec![0usize; n];
    let mut visit = |dy: &[f64]| {
        total += 1;
        if cross(dy).abs() >= observed {
            hits += 1;
        }
    };
    visit(&dy);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                dy.swap(0, i);
            } else {
                dy.swap(c[i], i);
            }
            visit(&dy);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// One side of a split correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Subcohort {
    Computed(CorrelationResult),
    TooFewSamples { n: usize },
    Undefined { n: usize, reason: String },
}

impl Subcohort {
    pub fn result(&self) -> Option<&CorrelationResult> {
        match self {
            Subcohort::Computed(r) => Some(r),
            _ => None,
        }
    }

    fn of(x: &[f64], y: &[f64]) -> Self {
        match spearman(x, y) {
            Ok(r) => Subcohort::Computed(r),
            Err(Error::TooFewSamples { n, .. }) => Subcohort::TooFewSamples { n },
            Err(e) => Subcohort::Undefined {
                n: x.len(),
                reason: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCorrelation {
    pub threshold: f64,
    /// Samples with `x < threshold`.
    pub below: Subcohort,
    /// Samples with `x >= threshold`.
    pub above: Subcohort,
}

/// Spearman correlation computed separately below and at-or-above a threshold on `x`.
pub fn split_correlation(x: &[f64], y: &[f64], threshold: f64) -> Result<SplitCorrelation> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (mut bx, mut by, mut ax, mut ay) = (vec![], vec![], vec![], vec![]);
    for (&xi, &yi) in x.iter().zip(y) {
        if xi < threshold {
            bx.push(xi);
            by.push(yi);
        } else {
            ax.push(xi);
            ay.push(yi);
        }
    }
    Ok(SplitCorrelation {
        threshold,
        below: Subcohort::of(&bx, &by),
        above: Subcohort::of(&ax, &ay),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_monotone_and_inverse() {
        let r = spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.rho, 1.0);
        assert_eq!(r.p_value, 0.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().rho, -1.0);
    }

    #[test]
    fn hand_computed_rho() {
        // sum d^2 = 4, 1 - 6*4/(5*24) = 0.8
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert_eq!(r.rho, 0.8);
        assert_eq!(r.n, 5);
    }

    #[test]
    fn t_approximation_reference_value() {
        // t = 0.8 * sqrt(3 / 0.36) = 2.3094; two-sided p on 3 df = 0.1041
        let r = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        assert!((r.p_value - 0.104_088_038_661_827_8).abs() < 1e-6, "{}", r.p_value);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooFewSamples { .. })));
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ZeroVariance("x"))));
        assert!(matches!(spearman(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]), Err(Error::ZeroVariance("y"))));
    }

    #[test]
    fn permutation_p_small_cases() {
        // n = 3 identity: only the identity and the reversal reach |rho| = 1
        let p = spearman_permutation_p(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((p - 2.0 / 6.0).abs() < 1e-15);
        // n = 4, rho = 0.8 (sum d^2 = 2): pairings with sum d^2 in {0, 2, 18, 20}
        let p = spearman_permutation_p(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 3.0, 4.0]).unwrap();
        assert!((p - 8.0 / 24.0).abs() < 1e-15, "{p}");
    }

    #[test]
    fn split_degenerate_threshold() {
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let y = [0.9, 0.7, 0.8, 0.5, 0.4];
        let split = split_correlation(&x, &y, 0.0).unwrap();
        assert_eq!(split.below, Subcohort::TooFewSamples { n: 0 });
        assert_eq!(split.above.result().unwrap(), &spearman(&x, &y).unwrap());
    }
}
