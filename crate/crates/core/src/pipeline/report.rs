//! Stage commands that write their outputs, and the consolidated report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analysis::{
    agreement_stage, load_references, load_table, shapley_stage, uncertainty_stage, AgreementDocument,
    AttributionsDocument, BootstrapSummary, Exclusion, Outcome, ReferenceAgreement, UncertaintyDocument,
    AGREEMENT_SCHEMA, ATTRIBUTIONS_SCHEMA, UNCERTAINTY_SCHEMA,
};
use super::config::RunConfig;
use super::io::{fmt_f64, read_json, write_json, CsvOut};
use crate::agreement::BinStatus;
use crate::error::{Error, Result};
use crate::ranking::RankVector;
use crate::shapley::AttributionRecord;
use crate::stats::{BootstrapResult, SplitCorrelation, Subcohort, PRNG_ALGORITHM};

pub const REPORT_SCHEMA: &str = "contrastshap/analysis-report/v1";

pub const ATTRIBUTIONS_CSV: &str = "attributions.csv";
pub const ATTRIBUTIONS_JSON: &str = "attributions.json";
pub const AGREEMENT_CSV: &str = "agreement.csv";
pub const AGREEMENT_JSON: &str = "agreement.json";
pub const VARIANCE_CSV: &str = "variance.csv";
pub const BOOTSTRAP_CSV: &str = "bootstrap_rhos.csv";
pub const UNCERTAINTY_JSON: &str = "uncertainty.json";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_TXT: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectRow {
    pub subject_id: String,
    pub mean_dice: f64,
    /// Overall, fold-averaged, in contrast order.
    pub phi: Vec<f64>,
    pub shapley_ranks: RankVector,
    pub regions: usize,
    /// NSF keyed by reference label.
    pub nsf: BTreeMap<String, f64>,
    pub overall_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySummary {
    pub variance_threshold: f64,
    pub percentile: f64,
    pub subjects: usize,
    pub bootstrap: Outcome<BootstrapSummary>,
    pub split: Outcome<SplitCorrelation>,
}

/// Everything a run produced, in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub schema: String,
    pub library_version: String,
    pub seed: u64,
    pub prng: String,
    pub config: RunConfig,
    pub contrasts: Vec<String>,
    pub subjects: Vec<SubjectRow>,
    pub excluded: Vec<Exclusion>,
    pub agreement: Vec<ReferenceAgreement>,
    pub uncertainty: UncertaintySummary,
}

impl AnalysisReport {
    /// Joins the three stage documents, which must come from one configuration.
    pub fn assemble(
        attributions: &AttributionsDocument,
        agreement: &AgreementDocument,
        uncertainty: &UncertaintyDocument,
    ) -> Result<Self> {
        let config = &attributions.config;
        if &agreement.config != config || &uncertainty.config != config {
            return Err(Error::InconsistentInputs("stage documents were produced with different configurations".into()));
        }
        let version = &attributions.library_version;
        if &agreement.library_version != version || &uncertainty.library_version != version {
            return Err(Error::InconsistentInputs("stage documents come from different library versions".into()));
        }
        let mut nsf: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
        for r in &agreement.records {
            nsf.entry(&r.subject_id).or_default().insert(r.reference_label.clone(), r.nsf);
        }
        let variance: BTreeMap<&str, f64> = uncertainty
            .records
            .iter()
            .map(|r| (r.subject_id.as_str(), r.overall_v))
            .collect();
        let subjects = attributions
            .subjects
            .iter()
            .map(|s| SubjectRow {
                subject_id: s.subject_id.clone(),
                mean_dice: s.mean_dice,
                phi: s.phi.clone(),
                shapley_ranks: s.ranks.clone(),
                regions: s.regions,
                nsf: nsf.remove(s.subject_id.as_str()).unwrap_or_default(),
                overall_v: variance.get(s.subject_id.as_str()).copied(),
            })
            .collect();
        let mut excluded: Vec<Exclusion> = agreement
            .skipped
            .iter()
            .chain(&uncertainty.excluded)
            .cloned()
            .collect();
        excluded.sort_by(|a, b| (&a.subject_id, &a.stage).cmp(&(&b.subject_id, &b.stage)));
        Ok(Self {
            schema: REPORT_SCHEMA.to_string(),
            library_version: version.clone(),
            seed: config.seed,
            prng: PRNG_ALGORITHM.to_string(),
            config: config.clone(),
            contrasts: attributions.contrasts.clone(),
            subjects,
            excluded,
            agreement: agreement.references.clone(),
            uncertainty: UncertaintySummary {
                variance_threshold: config.variance_threshold,
                percentile: config.percentile,
                subjects: uncertainty.records.len(),
                bootstrap: uncertainty.bootstrap.clone(),
                split: uncertainty.split.clone(),
            },
        })
    }

    /// Plain-text digest of the report.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "contrastshap {} analysis report", self.library_version);
        let _ = writeln!(out, "seed {} ({})", self.seed, self.prng);
        let _ = writeln!(out, "contrasts: {}", self.contrasts.join(", "));
        let _ = writeln!(out, "subjects: {} ({} exclusions)", self.subjects.len(), self.excluded.len());
        for e in &self.excluded {
            let _ = writeln!(out, "  excluded {} [{}]: {}", e.subject_id, e.stage, e.reason);
        }

        let _ = writeln!(out, "\nmean overall attribution");
        let n = self.subjects.len().max(1) as f64;
        for (i, name) in self.contrasts.iter().enumerate() {
            let mean = self.subjects.iter().map(|s| s.phi[i]).sum::<f64>() / n;
            let _ = writeln!(out, "  {name:<8} {mean:.4}");
        }

        for reference in &self.agreement {
            let _ = writeln!(out, "\nagreement with {} ({} subjects)", reference.label, reference.subjects);
            match &reference.comparison {
                Outcome::Failed { error } => {
                    let _ = writeln!(out, "  not computed: {error}");
                }
                Outcome::Ok { value } => {
                    for bin in value {
                        let median = bin.median_nsf.map_or_else(|| "-".to_string(), |m| format!("{m:.3}"));
                        let detail = match (bin.status, &bin.test) {
                            (BinStatus::Baseline, _) => "baseline".to_string(),
                            (BinStatus::Empty, _) => "empty".to_string(),
                            (BinStatus::Compared, Some(t)) => format!(
                                "U={} p={:.4}{}",
                                t.u,
                                t.p_value,
                                if bin.significant == Some(true) { " *" } else { "" }
                            ),
                            (BinStatus::Compared, None) => "no test".to_string(),
                        };
                        let _ = writeln!(out, "  {:<8} n={:<4} median NSF {median:<6} {detail}", bin.bin.label, bin.n);
                    }
                }
            }
        }

        let u = &self.uncertainty;
        let _ = writeln!(out, "\nrank variance vs Dice ({} subjects)", u.subjects);
        match &u.bootstrap {
            Outcome::Ok { value: b } => {
                let _ = writeln!(
                    out,
                    "  bootstrap ({}, {} iterations): mean rho {:.3}, median {:.3}, 95% CI [{:.3}, {:.3}]",
                    b.mode, b.iterations, b.mean_rho, b.median_rho, b.ci_low, b.ci_high
                );
            }
            Outcome::Failed { error } => {
                let _ = writeln!(out, "  bootstrap not computed: {error}");
            }
        }
        match &u.split {
            Outcome::Ok { value: s } => {
                for (side, sub) in [("below", &s.below), ("above", &s.above)] {
                    let text = match sub {
                        Subcohort::Computed(r) => format!("rho {:.3}, p {:.4}, n {}", r.rho, r.p_value, r.n),
                        Subcohort::TooFewSamples { n } => format!("too few samples (n {n})"),
                        Subcohort::Undefined { n, reason } => format!("undefined (n {n}): {reason}"),
                    };
                    let _ = writeln!(out, "  {side} V={}: {text}", u.variance_threshold);
                }
            }
            Outcome::Failed { error } => {
                let _ = writeln!(out, "  split correlation not computed: {error}");
            }
        }
        out
    }
}

fn prepare_output(config: &RunConfig) -> Result<&Path> {
    config.validate()?;
    let dir = config.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn write_attributions(dir: &Path, doc: &AttributionsDocument) -> Result<()> {
    let path = dir.join(ATTRIBUTIONS_CSV);
    let mut header = vec!["subject_id".to_string(), "fold".into(), "region".into()];
    header.extend(doc.contrasts.iter().map(|c| format!("phi_{c}")));
    let mut out = CsvOut::create(&path, &header)?;
    let row = |r: &AttributionRecord| {
        let mut fields = vec![
            r.subject_id.clone(),
            r.fold.map_or_else(String::new, |f| f.to_string()),
            r.region.clone(),
        ];
        fields.extend(r.phi.iter().map(|&v| fmt_f64(v)));
        fields
    };
    for r in doc.cells.iter().chain(&doc.overall).chain(&doc.fold_means) {
        out.row(row(r))?;
    }
    out.finish()?;
    write_json(&dir.join(ATTRIBUTIONS_JSON), doc)
}

fn write_agreement(dir: &Path, doc: &AgreementDocument) -> Result<()> {
    let path = dir.join(AGREEMENT_CSV);
    let mut out = CsvOut::create(&path, ["subject_id", "reference", "nsf", "mean_dice"])?;
    for r in &doc.records {
        out.row([r.subject_id.clone(), r.reference_label.clone(), fmt_f64(r.nsf), fmt_f64(r.mean_dice)])?;
    }
    out.finish()?;
    write_json(&dir.join(AGREEMENT_JSON), doc)
}

fn write_uncertainty(dir: &Path, doc: &UncertaintyDocument, draws: Option<&BootstrapResult>) -> Result<()> {
    let regions: Vec<&String> = {
        let mut all: Vec<&String> = doc.records.iter().flat_map(|r| r.per_region_v.keys()).collect();
        all.sort();
        all.dedup();
        all
    };
    let path = dir.join(VARIANCE_CSV);
    let mut header = vec!["subject_id".to_string(), "overall_v".into(), "mean_dice".into()];
    header.extend(regions.iter().map(|r| format!("v_{r}")));
    let mut out = CsvOut::create(&path, &header)?;
    for r in &doc.records {
        let mut fields = vec![r.subject_id.clone(), fmt_f64(r.overall_v), fmt_f64(r.mean_dice)];
        fields.extend(
            regions
                .iter()
                .map(|region| r.per_region_v.get(*region).map_or_else(String::new, |&v| fmt_f64(v))),
        );
        out.row(fields)?;
    }
    out.finish()?;

    let path = dir.join(BOOTSTRAP_CSV);
    let mut out = CsvOut::create(&path, ["iteration", "rho"])?;
    for (i, rho) in draws.map_or(&[][..], |b| &b.rhos).iter().enumerate() {
        out.row([i.to_string(), fmt_f64(*rho)])?;
    }
    out.finish()?;
    write_json(&dir.join(UNCERTAINTY_JSON), doc)
}

fn write_report(dir: &Path, report: &AnalysisReport) -> Result<()> {
    write_json(&dir.join(REPORT_JSON), report)?;
    let path = dir.join(SUMMARY_TXT);
    std::fs::write(&path, report.summary_text()).map_err(|e| Error::io(path, e))
}

/// Attributions for every cell, written as CSV and JSON.
pub fn cmd_shapley(config: &RunConfig) -> Result<AttributionsDocument> {
    let dir = prepare_output(config)?;
    let table = load_table(config)?;
    let doc = shapley_stage(config, &table)?;
    write_attributions(dir, &doc)?;
    Ok(doc)
}

/// NSF against each configured reference with the per-bin comparison.
pub fn cmd_agreement(config: &RunConfig) -> Result<AgreementDocument> {
    let dir = prepare_output(config)?;
    let references = load_references(config)?;
    let table = load_table(config)?;
    let attributions = shapley_stage(config, &table)?;
    let doc = agreement_stage(config, &attributions, &references)?;
    write_agreement(dir, &doc)?;
    Ok(doc)
}

/// Per-subject rank variance, bootstrap correlation and split correlation.
pub fn cmd_uncertainty(config: &RunConfig) -> Result<UncertaintyDocument> {
    let dir = prepare_output(config)?;
    let table = load_table(config)?;
    let stage = uncertainty_stage(config, &table)?;
    write_uncertainty(dir, &stage.document, stage.bootstrap.as_ref())?;
    Ok(stage.document)
}

/// Builds the consolidated report. With `from`, the three stage documents
/// are read from that directory and their configuration is used; otherwise
/// every stage is recomputed and its outputs written alongside the report.
pub fn cmd_report(config: &RunConfig, from: Option<&Path>) -> Result<AnalysisReport> {
    let dir = prepare_output(config)?;
    let report = match from {
        Some(source) => {
            let (attributions, agreement, uncertainty) = read_stage_documents(source)?;
            let mut report = AnalysisReport::assemble(&attributions, &agreement, &uncertainty)?;
            report.config.output_dir = config.output_dir.clone();
            report
        }
        None => {
            let references = load_references(config)?;
            let table = load_table(config)?;
            let attributions = shapley_stage(config, &table)?;
            let agreement = agreement_stage(config, &attributions, &references)?;
            let uncertainty = uncertainty_stage(config, &table)?;
            write_attributions(dir, &attributions)?;
            write_agreement(dir, &agreement)?;
            write_uncertainty(dir, &uncertainty.document, uncertainty.bootstrap.as_ref())?;
            AnalysisReport::assemble(&attributions, &agreement, &uncertainty.document)?
        }
    };
    write_report(dir, &report)?;
    Ok(report)
}

fn read_stage_documents(dir: &Path) -> Result<(AttributionsDocument, AgreementDocument, UncertaintyDocument)> {
    let paths: [PathBuf; 3] = [ATTRIBUTIONS_JSON, AGREEMENT_JSON, UNCERTAINTY_JSON].map(|f| dir.join(f));
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::PartialInputs {
            dir: dir.to_path_buf(),
            missing: missing.join(", "),
        });
    }
    Ok((
        read_json(&paths[0], ATTRIBUTIONS_SCHEMA, |d: &AttributionsDocument| &d.schema)?,
        read_json(&paths[1], AGREEMENT_SCHEMA, |d: &AgreementDocument| &d.schema)?,
        read_json(&paths[2], UNCERTAINTY_SCHEMA, |d: &UncertaintyDocument| &d.schema)?,
    ))
}
