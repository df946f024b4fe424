//! Contrast-level Shapley attribution for multi-channel segmentation models.
//!
//! Starting from a table of per-coalition performance values, the crate
//! computes exact Shapley values per input contrast, turns them into dense
//! rankings, and derives two explainability metrics: agreement with reference
//! rankings (normalized Spearman footrule) and interfold Shapley-rank variance.
//! [`stats`] relates both to model performance and [`pipeline`] wires the
//! whole analysis to files.

pub mod agreement;
pub mod contrast;
pub mod error;
pub mod pipeline;
pub mod ranking;
pub mod shapley;
pub mod stats;
pub mod synth;
pub mod table;
pub mod uncertainty;

pub use contrast::{coalition_from_names, Coalition, ContrastSet};
pub use error::{Error, ErrorClass, Result};
pub use ranking::{RankVector, ReferenceRanking};
pub use shapley::AttributionRecord;
pub use table::{validate_metric_table, MetricRange, MetricTable, RawCell};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
