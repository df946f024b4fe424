use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Computation,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid contrast set: {0}")]
    InvalidContrastSet(String),
    #[error("unknown contrast `{0}`")]
    UnknownContrast(String),
    #[error("missing coalition {mask:#b} for subject `{subject}`, fold {fold}, region `{region}`")]
    MissingCoalition {
        subject: String,
        fold: u32,
        region: String,
        mask: u32,
    },
    #[error("duplicate cell: subject `{subject}`, fold {fold}, region `{region}`, coalition {mask:#b}")]
    DuplicateCell {
        subject: String,
        fold: u32,
        region: String,
        mask: u32,
    },
    #[error("metric {value} out of range for subject `{subject}`, fold {fold}, region `{region}`, coalition {mask:#b}")]
    MetricOutOfRange {
        subject: String,
        fold: u32,
        region: String,
        mask: u32,
        value: f64,
    },
    #[error("region label `{0}` is reserved")]
    ReservedRegion(String),
    #[error("no complete game for subject `{subject}`, fold {fold}, region `{region}`")]
    IncompleteCell {
        subject: String,
        fold: u32,
        region: String,
    },
    #[error("permutation oracle limited to n <= {max}, got {n}")]
    NTooLargeForOracle { n: usize, max: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("records disagree on contrast count")]
    MismatchedContrasts,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("invalid rank vector: {0}")]
    InvalidRankVector(String),
    #[error("need at least {min} items, got {n}")]
    NTooSmall { n: usize, min: usize },
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("zero variance in {0}; correlation undefined")]
    ZeroVariance(&'static str),
    #[error("bootstrap iteration {iteration} stayed degenerate after {redraws} redraws")]
    DegenerateResample { iteration: usize, redraws: usize },
    #[error("empty group")]
    EmptyGroup,
    #[error("baseline bin `{0}` has no records")]
    EmptyBaseline(String),
    #[error("subject `{subject}` lacks fold(s) for region `{region}`")]
    SubjectMissingFolds { subject: String, region: String },
    #[error("subject `{0}` not found")]
    UnknownSubject(String),
    #[error("{}: missing {missing}; run the earlier subcommands into this directory or drop `--from` to recompute", dir.display())]
    PartialInputs { dir: PathBuf, missing: String },
    #[error("stage outputs disagree: {0}")]
    InconsistentInputs(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("row {row}: {source}")]
    Row {
        row: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: schema validation failed: {message}", path.display())]
    Schema { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Row { source, .. } | Error::InFile { source, .. } => source.class(),
            Error::IncompleteCell { .. }
            | Error::NTooLargeForOracle { .. }
            | Error::ZeroVariance(_)
            | Error::DegenerateResample { .. }
            | Error::TooFewSamples { .. }
            | Error::EmptyGroup
            | Error::EmptyBaseline(_) => ErrorClass::Computation,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn at_row(self, row: Option<u64>) -> Error {
        match row {
            Some(row) => Error::Row {
                row,
                source: Box::new(self),
            },
            None => self,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
