//! End-to-end analysis over metric-table files: stage computations, file
//! formats, and the consolidated report.

pub mod analysis;
pub mod config;
pub mod io;
pub mod report;

pub use analysis::{
    agreement_stage, load_references, load_table, shapley_stage, uncertainty_stage, AgreementDocument,
    AttributionsDocument, BootstrapSummary, Exclusion, Outcome, ReferenceAgreement, References,
    SubjectAttribution, UncertaintyDocument, UncertaintyStage,
};
pub use config::{ReferenceSource, RunConfig};
pub use io::{read_metric_table, write_metric_table_csv};
pub use report::{cmd_agreement, cmd_report, cmd_shapley, cmd_uncertainty, AnalysisReport};
