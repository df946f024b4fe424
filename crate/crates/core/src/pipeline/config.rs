use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agreement::{check_bins, default_dice_bins, DiceBin, DEFAULT_BASELINE_BIN};
use crate::contrast::{ContrastSet, BRATS_CONTRASTS};
use crate::error::{Error, Result};
use crate::stats::ResampleMode;
use crate::table::MetricRange;

pub const DEFAULT_BOOTSTRAP_ITERATIONS: usize = 5000;
pub const DEFAULT_PERCENTILE: f64 = 80.0;
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.275;
pub const DEFAULT_SEED: u64 = 20240;

/// Where a reference ranking comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferenceSource {
    /// The protocol ordering T1c > T2f > T1n = T2w.
    Clinical,
    /// A `contrast,rank` CSV applied to every subject.
    File(PathBuf),
}

impl FromStr for ReferenceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clinical" | "clinical_standard" => Ok(ReferenceSource::Clinical),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(ReferenceSource::File(PathBuf::from(path))),
                _ => Err(Error::ConfigInvalid(format!(
                    "reference `{s}`: expected `clinical` or `file:PATH`"
                ))),
            },
        }
    }
}

impl fmt::Display for ReferenceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceSource::Clinical => f.write_str("clinical"),
            ReferenceSource::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

impl Serialize for ReferenceSource {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ReferenceSource {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Settings for a full analysis run.
///
/// `output_dir` is where files go and is left out of the serialized echo so
/// that reports do not depend on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub contrasts: Vec<String>,
    pub references: Vec<ReferenceSource>,
    pub annotators: Option<PathBuf>,
    pub dice_bins: Vec<DiceBin>,
    pub baseline_bin: usize,
    pub variance_threshold: f64,
    pub bootstrap_iterations: usize,
    pub percentile: f64,
    pub resample: ResampleMode,
    pub seed: u64,
    pub tie_epsilon: f64,
    pub metric_range: MetricRange,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            contrasts: BRATS_CONTRASTS.iter().map(|s| s.to_string()).collect(),
            references: vec![ReferenceSource::Clinical],
            annotators: None,
            dice_bins: default_dice_bins(),
            baseline_bin: DEFAULT_BASELINE_BIN,
            variance_threshold: DEFAULT_VARIANCE_THRESHOLD,
            bootstrap_iterations: DEFAULT_BOOTSTRAP_ITERATIONS,
            percentile: DEFAULT_PERCENTILE,
            resample: ResampleMode::Stratified,
            seed: DEFAULT_SEED,
            tie_epsilon: 0.0,
            metric_range: MetricRange::UnitInterval,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Reads a TOML or JSON (by extension) config file. Missing keys take defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn contrast_set(&self) -> Result<ContrastSet> {
        ContrastSet::new(self.contrasts.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.contrast_set()?;
        check_bins(&self.dice_bins, self.baseline_bin)?;
        if self.bootstrap_iterations == 0 {
            return Err(Error::ConfigInvalid("bootstrap_iterations must be >= 1".into()));
        }
        if !(self.variance_threshold.is_finite() && self.variance_threshold >= 0.0) {
            return Err(Error::ConfigInvalid("variance_threshold must be >= 0".into()));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::ConfigInvalid("percentile must lie in (0, 100)".into()));
        }
        if !(self.tie_epsilon.is_finite() && self.tie_epsilon >= 0.0) {
            return Err(Error::ConfigInvalid("tie_epsilon must be >= 0".into()));
        }
        Ok(())
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::ConfigInvalid("no input metric table given".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_source_parsing() {
        assert_eq!("clinical".parse::<ReferenceSource>().unwrap(), ReferenceSource::Clinical);
        assert_eq!(
            "file:refs/custom.csv".parse::<ReferenceSource>().unwrap(),
            ReferenceSource::File("refs/custom.csv".into())
        );
        assert!("file:".parse::<ReferenceSource>().is_err());
        assert!("radiologist".parse::<ReferenceSource>().is_err());
    }

    #[test]
    fn partial_toml_takes_defaults() {
        let cfg: RunConfig = toml::from_str("seed = 7\nreferences = [\"clinical\", \"file:r.csv\"]").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.bootstrap_iterations, DEFAULT_BOOTSTRAP_ITERATIONS);
        assert_eq!(cfg.references.len(), 2);
        assert!(toml::from_str::<RunConfig>("sed = 7").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let ok = RunConfig::default();
        ok.validate().unwrap();
        for bad in [
            RunConfig { bootstrap_iterations: 0, ..ok.clone() },
            RunConfig { percentile: 100.0, ..ok.clone() },
            RunConfig { variance_threshold: -0.1, ..ok.clone() },
            RunConfig { baseline_bin: 42, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
