//! The three analysis stages: attribution, agreement and uncertainty.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ReferenceSource, RunConfig};
use super::io::{read_annotator_consensus, read_metric_table, read_reference_file};
use crate::agreement::{group_agreement_comparison, nsf, AgreementRecord, BinComparison};
use crate::error::{Error, Result};
use crate::ranking::{clinical_standard, dense_rank_desc, RankVector, ReferenceRanking, ANNOTATOR_CONSENSUS};
use crate::shapley::{aggregate_overall, attribute_table, mean_over_folds, AttributionRecord};
use crate::stats::{bootstrap_spearman, percentile_strata, split_correlation, BootstrapResult, ResampleMode, SplitCorrelation};
use crate::table::{MetricTable, OVERALL_REGION};
use crate::uncertainty::{subject_variance, VarianceRecord};

pub const ATTRIBUTIONS_SCHEMA: &str = "contrastshap/attributions/v1";
pub const AGREEMENT_SCHEMA: &str = "contrastshap/agreement/v1";
pub const UNCERTAINTY_SCHEMA: &str = "contrastshap/uncertainty/v1";

/// A cohort-level result that may be undefined for the data at hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case", deny_unknown_fields)]
pub enum Outcome<T> {
    Ok { value: T },
    Failed { error: String },
}

impl<T> Outcome<T> {
    pub fn from_result(result: Result<T>) -> Self {
        match result {
            Ok(value) => Outcome::Ok { value },
            Err(e) => Outcome::Failed { error: e.to_string() },
        }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Outcome::Ok { value } => Some(value),
            Outcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exclusion {
    pub subject_id: String,
    pub stage: String,
    pub reason: String,
}

/// Fold-averaged overall attribution of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectAttribution {
    pub subject_id: String,
    pub mean_dice: f64,
    /// Regions averaged into the overall record.
    pub regions: usize,
    pub phi: Vec<f64>,
    pub ranks: RankVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionsDocument {
    pub schema: String,
    pub library_version: String,
    pub config: RunConfig,
    pub contrasts: Vec<String>,
    /// Per (subject, fold, region).
    pub cells: Vec<AttributionRecord>,
    /// Region-averaged, per (subject, fold).
    pub overall: Vec<AttributionRecord>,
    /// Fold-averaged, per (subject, region) including `overall`.
    pub fold_means: Vec<AttributionRecord>,
    pub subjects: Vec<SubjectAttribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceAgreement {
    pub label: String,
    /// Cohort-wide ranking, absent for per-subject references.
    pub ranks: Option<RankVector>,
    pub subjects: usize,
    pub comparison: Outcome<Vec<BinComparison>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgreementDocument {
    pub schema: String,
    pub library_version: String,
    pub config: RunConfig,
    pub records: Vec<AgreementRecord>,
    pub references: Vec<ReferenceAgreement>,
    pub skipped: Vec<Exclusion>,
}

/// Bootstrap result without the per-iteration draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSummary {
    pub n: usize,
    pub iterations: usize,
    pub seed: u64,
    pub prng: String,
    pub mode: ResampleMode,
    /// Variance at the stratification percentile, when stratified.
    pub stratum_cut: Option<f64>,
    pub mean_rho: f64,
    pub median_rho: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyDocument {
    pub schema: String,
    pub library_version: String,
    pub config: RunConfig,
    pub records: Vec<VarianceRecord>,
    pub excluded: Vec<Exclusion>,
    pub bootstrap: Outcome<BootstrapSummary>,
    pub split: Outcome<SplitCorrelation>,
}

/// Reference rankings resolved for a run.
#[derive(Debug, Clone, Default)]
pub struct References {
    pub cohort: Vec<ReferenceRanking>,
    pub per_subject: Option<BTreeMap<String, RankVector>>,
}

pub fn load_table(config: &RunConfig) -> Result<MetricTable> {
    read_metric_table(config.input_path()?, &config.contrast_set()?, config.metric_range)
}

pub fn load_references(config: &RunConfig) -> Result<References> {
    let contrasts = config.contrast_set()?;
    let cohort = config
        .references
        .iter()
        .map(|source| match source {
            ReferenceSource::Clinical => clinical_standard(&contrasts),
            ReferenceSource::File(path) => read_reference_file(path, &contrasts),
        })
        .collect::<Result<Vec<_>>>()?;
    let per_subject = config
        .annotators
        .as_deref()
        .map(|path| read_annotator_consensus(path, &contrasts))
        .transpose()?;
    Ok(References { cohort, per_subject })
}

pub fn shapley_stage(config: &RunConfig, table: &MetricTable) -> Result<AttributionsDocument> {
    let cells = attribute_table(table);
    let mut by_subject: BTreeMap<&str, Vec<&AttributionRecord>> = BTreeMap::new();
    for record in &cells {
        by_subject.entry(&record.subject_id).or_default().push(record);
    }
    let mut overall = Vec::new();
    let mut fold_means = Vec::new();
    let mut subjects = Vec::new();
    for (subject, records) in by_subject {
        let mut by_fold: BTreeMap<u32, Vec<AttributionRecord>> = BTreeMap::new();
        let mut by_region: BTreeMap<&str, Vec<AttributionRecord>> = BTreeMap::new();
        for r in records {
            by_fold.entry(r.fold.unwrap_or_default()).or_default().push(r.clone());
            by_region.entry(&r.region).or_default().push(r.clone());
        }
        let per_fold_overall = by_fold
            .values()
            .map(|rs| aggregate_overall(rs))
            .collect::<Result<Vec<_>>>()?;
        for (region, rs) in &by_region {
            fold_means.push(AttributionRecord {
                subject_id: subject.to_string(),
                fold: None,
                region: region.to_string(),
                phi: mean_over_folds(rs)?,
            });
        }
        let phi = mean_over_folds(&per_fold_overall)?;
        fold_means.push(AttributionRecord {
            subject_id: subject.to_string(),
            fold: None,
            region: OVERALL_REGION.to_string(),
            phi: phi.clone(),
        });
        let mean_dice = table
            .dice_summary(subject)
            .ok_or_else(|| Error::UnknownSubject(subject.to_string()))?
            .mean_dice;
        subjects.push(SubjectAttribution {
            subject_id: subject.to_string(),
            mean_dice,
            regions: by_region.len(),
            ranks: dense_rank_desc(&phi, config.tie_epsilon)?,
            phi,
        });
        overall.extend(per_fold_overall);
    }
    Ok(AttributionsDocument {
        schema: ATTRIBUTIONS_SCHEMA.to_string(),
        library_version: crate::VERSION.to_string(),
        config: config.clone(),
        contrasts: table.contrasts().names().to_vec(),
        cells,
        overall,
        fold_means,
        subjects,
    })
}

pub fn agreement_stage(
    config: &RunConfig,
    attributions: &AttributionsDocument,
    references: &References,
) -> Result<AgreementDocument> {
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let compare = |recs: &[AgreementRecord]| {
        Outcome::from_result(group_agreement_comparison(recs, &config.dice_bins, config.baseline_bin))
    };
    for reference in &references.cohort {
        let recs = attributions
            .subjects
            .iter()
            .map(|s| {
                Ok(AgreementRecord {
                    subject_id: s.subject_id.clone(),
                    reference_label: reference.label.clone(),
                    nsf: nsf(&s.ranks, &reference.ranks)?,
                    mean_dice: s.mean_dice,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        summaries.push(ReferenceAgreement {
            label: reference.label.clone(),
            ranks: Some(reference.ranks.clone()),
            subjects: recs.len(),
            comparison: compare(&recs),
        });
        records.extend(recs);
    }
    let mut skipped = Vec::new();
    if let Some(consensus) = &references.per_subject {
        let known: BTreeMap<&str, &SubjectAttribution> = attributions
            .subjects
            .iter()
            .map(|s| (s.subject_id.as_str(), s))
            .collect();
        let mut recs = Vec::new();
        for (subject, ranks) in consensus {
            match known.get(subject.as_str()) {
                Some(s) => recs.push(AgreementRecord {
                    subject_id: subject.clone(),
                    reference_label: ANNOTATOR_CONSENSUS.to_string(),
                    nsf: nsf(&s.ranks, ranks)?,
                    mean_dice: s.mean_dice,
                }),
                None => skipped.push(Exclusion {
                    subject_id: subject.clone(),
                    stage: "agreement".into(),
                    reason: "annotated subject has no metric data".into(),
                }),
            }
        }
        summaries.push(ReferenceAgreement {
            label: ANNOTATOR_CONSENSUS.to_string(),
            ranks: None,
            subjects: recs.len(),
            comparison: compare(&recs),
        });
        records.extend(recs);
    }
    Ok(AgreementDocument {
        schema: AGREEMENT_SCHEMA.to_string(),
        library_version: crate::VERSION.to_string(),
        config: config.clone(),
        records,
        references: summaries,
        skipped,
    })
}

/// Uncertainty document plus the raw bootstrap draws (written separately).
pub struct UncertaintyStage {
    pub document: UncertaintyDocument,
    pub bootstrap: Option<BootstrapResult>,
}

pub fn uncertainty_stage(config: &RunConfig, table: &MetricTable) -> Result<UncertaintyStage> {
    let outcomes: Vec<(String, Result<VarianceRecord>)> = table
        .subjects()
        .par_iter()
        .map(|s| (s.clone(), subject_variance(table, s, config.tie_epsilon)))
        .collect();
    let mut records = Vec::new();
    let mut excluded = Vec::new();
    for (subject, outcome) in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e @ (Error::TooFewFolds(_) | Error::SubjectMissingFolds { .. })) => {
                log::warn!("excluding `{subject}` from the variance cohort: {e}");
                excluded.push(Exclusion {
                    subject_id: subject,
                    stage: "uncertainty".into(),
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let x: Vec<f64> = records.iter().map(|r| r.overall_v).collect();
    let y: Vec<f64> = records.iter().map(|r| r.mean_dice).collect();

    let (summary, draws) = match run_bootstrap(config, &x, &y) {
        Ok((stratum_cut, b)) => {
            let summary = BootstrapSummary {
                n: x.len(),
                iterations: b.iterations,
                seed: b.seed,
                prng: b.prng.clone(),
                mode: b.mode,
                stratum_cut,
                mean_rho: b.mean_rho,
                median_rho: b.median_rho,
                ci_low: b.ci_low,
                ci_high: b.ci_high,
                redraws: b.redraws,
            };
            (Outcome::Ok { value: summary }, Some(b))
        }
        Err(e) => (Outcome::Failed { error: e.to_string() }, None),
    };
    Ok(UncertaintyStage {
        document: UncertaintyDocument {
            schema: UNCERTAINTY_SCHEMA.to_string(),
            library_version: crate::VERSION.to_string(),
            config: config.clone(),
            records,
            excluded,
            bootstrap: summary,
            split: Outcome::from_result(split_correlation(&x, &y, config.variance_threshold)),
        },
        bootstrap: draws,
    })
}

fn run_bootstrap(config: &RunConfig, x: &[f64], y: &[f64]) -> Result<(Option<f64>, BootstrapResult)> {
    match config.resample {
        ResampleMode::Plain => Ok((None, bootstrap_spearman(x, y, config.bootstrap_iterations, config.seed, None)?)),
        ResampleMode::Stratified => {
            let (cut, labels) = percentile_strata(x, config.percentile)?;
            let result = bootstrap_spearman(x, y, config.bootstrap_iterations, config.seed, Some(&labels))?;
            Ok((Some(cut), result))
        }
    }
}
