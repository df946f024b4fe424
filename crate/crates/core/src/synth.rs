//! Synthetic coalition games with known attributions.
//!
//! Every cell is an additive game `D(S) = base + sum_{i in S} w_i`, plus an
//! optional pairwise interaction and per-fold perturbation of the weights.
//! All parameters are rounded to multiples of `2^-32`, so every coalition
//! value and every marginal contribution is exact in `f64`. Noise-free cells
//! therefore have Shapley values equal to the planted weights and equal
//! weights stay exactly tied after attribution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agreement::nsf;
use crate::contrast::ContrastSet;
use crate::error::{Error, Result};
use crate::ranking::RankVector;
use crate::table::{CellKey, MetricRange, MetricTable};

const GRID: f64 = (1u64 << 32) as f64;

fn quantize(x: f64) -> f64 {
    (x * GRID).round() / GRID
}

// Streams below this value belong to subjects.
const COHORT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub contrasts: Vec<String>,
    pub n_subjects: usize,
    pub n_folds: usize,
    pub regions: Vec<String>,
    /// Planted per-contrast contributions (the ground-truth Shapley values).
    pub additive_weights: Vec<f64>,
    /// Metric of the empty coalition.
    pub baseline: f64,
    pub interaction_strength: f64,
    /// Contrast indices whose joint presence adds `interaction_strength`.
    pub interaction_pair: (usize, usize),
    /// Standard deviation of the per-fold, per-contrast weight perturbation.
    pub fold_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            contrasts: crate::contrast::BRATS_CONTRASTS.iter().map(|s| s.to_string()).collect(),
            n_subjects: 20,
            n_folds: 5,
            regions: vec!["ED".into(), "ET".into(), "NCR".into()],
            additive_weights: vec![0.3, 0.1, 0.2, 0.15],
            baseline: 0.0,
            interaction_strength: 0.0,
            interaction_pair: (0, 2),
            fold_noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<ContrastSet> {
        let invalid = |msg: String| Err(Error::ConfigInvalid(msg));
        let contrasts = ContrastSet::new(self.contrasts.clone())?;
        let n = contrasts.len();
        if self.additive_weights.len() != n {
            return invalid(format!("{} weights for {n} contrasts", self.additive_weights.len()));
        }
        if self.additive_weights.iter().any(|w| !w.is_finite()) || !self.baseline.is_finite() {
            return invalid("weights and baseline must be finite".into());
        }
        if !(self.fold_noise_sigma.is_finite() && self.fold_noise_sigma >= 0.0) {
            return invalid("fold_noise_sigma must be >= 0".into());
        }
        if !(self.interaction_strength.is_finite() && self.interaction_strength >= 0.0) {
            return invalid("interaction_strength must be >= 0".into());
        }
        let (a, b) = self.interaction_pair;
        if self.interaction_strength > 0.0 && (a == b || a >= n || b >= n) {
            return invalid(format!("interaction pair ({a}, {b}) invalid for {n} contrasts"));
        }
        if self.n_subjects == 0 || self.n_folds == 0 || self.regions.is_empty() {
            return invalid("need at least one subject, fold and region".into());
        }
        Ok(contrasts)
    }

    pub fn subject_id(&self, index: usize) -> String {
        let width = self.n_subjects.to_string().len().max(4);
        format!("S{:0width$}", index + 1)
    }
}

/// A generated table and how many coalition values had to be clipped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub table: MetricTable,
    pub clip_events: usize,
}

struct SubjectPlan {
    weights: Vec<f64>,
    sigma: f64,
    /// Center each fold's noise so the full-coalition metric stays fixed.
    zero_sum: bool,
}

fn subject_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn build(config: &SynthConfig, contrasts: ContrastSet, plans: &[SubjectPlan]) -> Result<SynthOutput> {
    let n = contrasts.len();
    let base = quantize(config.baseline);
    let interaction = quantize(config.interaction_strength);
    let pair_mask = (1usize << config.interaction_pair.0) | (1usize << config.interaction_pair.1);
    let mut clip_events = 0usize;
    let mut games = Vec::with_capacity(plans.len() * config.n_folds * config.regions.len());
    for (index, plan) in plans.iter().enumerate() {
        let mut rng = subject_rng(config.seed, index as u64);
        let noise = if plan.sigma > 0.0 {
            Some(Normal::new(0.0, plan.sigma).map_err(|e| Error::ConfigInvalid(e.to_string()))?)
        } else {
            None
        };
        let subject = config.subject_id(index);
        for fold in 0..config.n_folds {
            for region in &config.regions {
                let mut draws: Vec<f64> = plan
                    .weights
                    .iter()
                    .map(|_| noise.map_or(0.0, |d| d.sample(&mut rng)))
                    .collect();
                if plan.zero_sum {
                    let mean = draws.iter().sum::<f64>() / n as f64;
                    draws.iter_mut().for_each(|e| *e -= mean);
                }
                let weights: Vec<f64> = plan.weights.iter().zip(&draws).map(|(w, e)| quantize(w + e)).collect();
                let game: Vec<f64> = (0..1usize << n)
                    .map(|mask| {
                        let mut value = base;
                        for (i, w) in weights.iter().enumerate() {
                            if mask & (1 << i) != 0 {
                                value += w;
                            }
                        }
                        if interaction > 0.0 && mask & pair_mask == pair_mask {
                            value += interaction;
                        }
                        if !(0.0..=1.0).contains(&value) {
                            clip_events += 1;
                            value = value.clamp(0.0, 1.0);
                        }
                        value
                    })
                    .collect();
                games.push((CellKey::new(subject.clone(), fold as u32, region.clone()), game));
            }
        }
    }
    if clip_events > 0 {
        log::warn!("synthetic generation clipped {clip_events} coalition values to [0, 1]");
    }
    let table = MetricTable::from_games(contrasts, MetricRange::UnitInterval, games)?;
    Ok(SynthOutput { table, clip_events })
}

/// Every subject shares the configured weights and noise level.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    let contrasts = config.validate()?;
    let plans: Vec<SubjectPlan> = (0..config.n_subjects)
        .map(|_| SubjectPlan {
            weights: config.additive_weights.clone(),
            sigma: config.fold_noise_sigma,
            zero_sum: false,
        })
        .collect();
    build(config, contrasts, &plans)
}

/// Weights whose descending order reproduces `ranks` (ties stay tied) and
/// whose sum, together with the baseline, equals `dice`.
fn weights_for_ranks(ranks: &RankVector, dice: f64, baseline: f64) -> Vec<f64> {
    let depth = ranks.depth();
    let scores: Vec<f64> = ranks.ranks().iter().map(|r| f64::from(depth - r + 1)).collect();
    let total: f64 = scores.iter().sum();
    let level = |score: f64| quantize((dice - baseline) * score / total);
    scores.into_iter().map(level).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// Reverse the reference order (`d + 1 - r`).
    #[default]
    Reverse,
    /// Randomly permute the reference ranks across contrasts.
    Shuffle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementPlanting {
    pub flip_fraction: f64,
    pub flip_mode: FlipMode,
    /// Uniform Dice range for subjects ordered like the reference.
    pub aligned_dice: (f64, f64),
    /// Uniform Dice range for flipped subjects.
    pub flipped_dice: (f64, f64),
}

impl AgreementPlanting {
    pub fn new(flip_fraction: f64) -> Self {
        Self {
            flip_fraction,
            flip_mode: FlipMode::Reverse,
            aligned_dice: (0.55, 0.95),
            flipped_dice: (0.25, 0.65),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSubject {
    pub subject_id: String,
    pub flipped: bool,
    pub planted_ranks: RankVector,
    pub expected_nsf: f64,
    pub target_dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedAgreement {
    pub table: MetricTable,
    pub clip_events: usize,
    pub subjects: Vec<PlantedSubject>,
}

impl PlantedAgreement {
    pub fn expected_mean_nsf(&self) -> f64 {
        self.subjects.iter().map(|s| s.expected_nsf).sum::<f64>() / self.subjects.len() as f64
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), baseline: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo > baseline && hi <= 1.0) {
        return Err(Error::ConfigInvalid(format!(
            "{name} range ({lo}, {hi}) must lie in (baseline, 1]"
        )));
    }
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Cohort where a `1 - flip_fraction` share of subjects is planted with the
/// reference order and the rest with a permuted order, each with a target
/// Dice drawn from its group's range. `config.additive_weights` is ignored.
pub fn planted_agreement_cohort(
    config: &SynthConfig,
    target: &RankVector,
    planting: &AgreementPlanting,
) -> Result<PlantedAgreement> {
    let contrasts = config.validate()?;
    if target.len() != contrasts.len() {
        return Err(Error::LengthMismatch {
            left: contrasts.len(),
            right: target.len(),
        });
    }
    if !(0.0..=1.0).contains(&planting.flip_fraction) {
        return Err(Error::ConfigInvalid("flip_fraction must lie in [0, 1]".into()));
    }
    check_range("aligned_dice", planting.aligned_dice, config.baseline)?;
    check_range("flipped_dice", planting.flipped_dice, config.baseline)?;

    let mut rng = subject_rng(config.seed, COHORT_STREAM);
    let n = config.n_subjects;
    let flips = (planting.flip_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut flipped = vec![false; n];
    order[..flips].iter().for_each(|&i| flipped[i] = true);

    let depth = target.depth();
    let mut subjects = Vec::with_capacity(n);
    let mut plans = Vec::with_capacity(n);
    for (index, &is_flipped) in flipped.iter().enumerate() {
        let planted_ranks = if !is_flipped {
            target.clone()
        } else {
            match planting.flip_mode {
                FlipMode::Reverse => RankVector::new(target.ranks().iter().map(|r| depth + 1 - r).collect())?,
                FlipMode::Shuffle => {
                    let mut ranks = target.ranks().to_vec();
                    ranks.shuffle(&mut rng);
                    RankVector::new(ranks)?
                }
            }
        };
        let range = if is_flipped {
            planting.flipped_dice
        } else {
            planting.aligned_dice
        };
        let target_dice = draw(&mut rng, range);
        plans.push(SubjectPlan {
            weights: weights_for_ranks(&planted_ranks, target_dice, config.baseline),
            sigma: config.fold_noise_sigma,
            zero_sum: false,
        });
        subjects.push(PlantedSubject {
            subject_id: config.subject_id(index),
            flipped: is_flipped,
            expected_nsf: nsf(&planted_ranks, target)?,
            planted_ranks,
            target_dice,
        });
    }
    let out = build(config, contrasts, &plans)?;
    Ok(PlantedAgreement {
        table: out.table,
        clip_events: out.clip_events,
        subjects,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePlanting {
    /// Fold noise of a subject with latent uncertainty 1, relative to the
    /// configured weights.
    pub max_sigma: f64,
    /// Latent uncertainty is `U(0,1)^skew`; values above 1 skew it toward 0.
    pub skew: f64,
    /// Dice of a subject with latent uncertainty 0.
    pub dice_high: f64,
    /// Dice lost per unit of latent uncertainty.
    pub dice_slope: f64,
    /// Standard deviation of Dice noise.
    pub dice_noise: f64,
    /// When false, Dice depends on an independent draw instead of the
    /// latent uncertainty, giving a cohort with no variance-Dice relation.
    pub coupled: bool,
}

impl Default for VariancePlanting {
    fn default() -> Self {
        Self {
            max_sigma: 0.12,
            skew: 2.0,
            dice_high: 0.92,
            dice_slope: 0.5,
            dice_noise: 0.05,
            coupled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedUncertainty {
    pub subject_id: String,
    pub latent: f64,
    pub sigma: f64,
    pub target_dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedVariance {
    pub table: MetricTable,
    pub clip_events: usize,
    pub subjects: Vec<PlantedUncertainty>,
}

/// Cohort where fold noise grows with a skewed latent uncertainty and, when
/// coupled, Dice falls with it. The configured weights give every subject's
/// contrast order, rescaled to its target Dice. Fold noise sums to zero over
/// the contrasts, so the full-coalition metric equals the target Dice in
/// every fold.
pub fn planted_variance_cohort(config: &SynthConfig, planting: &VariancePlanting) -> Result<PlantedVariance> {
    let contrasts = config.validate()?;
    let p = planting;
    if !(p.max_sigma >= 0.0 && p.skew > 0.0 && p.dice_noise >= 0.0 && p.dice_slope.is_finite()) {
        return Err(Error::ConfigInvalid("invalid variance planting".into()));
    }
    let weight_total: f64 = config.additive_weights.iter().sum();
    if weight_total.is_nan() || weight_total <= 0.0 || config.additive_weights.iter().any(|w| *w < 0.0) {
        return Err(Error::ConfigInvalid("weights must be non-negative with positive sum".into()));
    }
    let dice_noise = Normal::new(0.0, p.dice_noise).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let mut rng = subject_rng(config.seed, COHORT_STREAM);
    let lo = config.baseline + 0.02;
    let mut subjects = Vec::with_capacity(config.n_subjects);
    let mut plans = Vec::with_capacity(config.n_subjects);
    for index in 0..config.n_subjects {
        let latent = rng.random::<f64>().powf(p.skew);
        let driver = if p.coupled {
            latent
        } else {
            rng.random::<f64>().powf(p.skew)
        };
        let target_dice = (p.dice_high - p.dice_slope * driver + dice_noise.sample(&mut rng)).clamp(lo, 0.99);
        // Noise scales with the weights so rank stability depends on the
        // latent uncertainty alone, not on the Dice level.
        let scale = (target_dice - config.baseline) / weight_total;
        let sigma = p.max_sigma * latent * scale;
        plans.push(SubjectPlan {
            weights: config.additive_weights.iter().map(|w| quantize(scale * w)).collect(),
            sigma,
            zero_sum: true,
        });
        subjects.push(PlantedUncertainty {
            subject_id: config.subject_id(index),
            latent,
            sigma,
            target_dice,
        });
    }
    let out = build(config, contrasts, &plans)?;
    Ok(PlantedVariance {
        table: out.table,
        clip_events: out.clip_events,
        subjects,
    })
}
