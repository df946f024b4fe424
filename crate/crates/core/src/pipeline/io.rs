//! File formats: metric tables, annotator rankings, reference rankings, and
//! JSON documents.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::contrast::{ContrastSet, EMPTY_COALITION};
use crate::error::{Error, Result};
use crate::ranking::{consensus_rank, RankVector, ReferenceRanking};
use crate::table::{validate_metric_table, MetricRange, MetricTable, RawCell};

pub const METRIC_TABLE_HEADER: [&str; 5] = ["subject_id", "fold", "region", "coalition", "metric"];
pub const ANNOTATOR_HEADER: [&str; 4] = ["subject_id", "annotator", "contrast", "rank"];
pub const REFERENCE_HEADER: [&str; 2] = ["contrast", "rank"];
pub const METRIC_TABLE_SCHEMA: &str = "contrastshap/metric-table/v1";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| parse_error(path, e.to_string()))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(parse_error(
            path,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(reader)
}

fn split_coalition(text: &str) -> Vec<String> {
    let text = text.trim();
    if text.is_empty() || text == EMPTY_COALITION {
        Vec::new()
    } else {
        text.split('+').map(|s| s.trim().to_string()).collect()
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, row: u64, name: &str, text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| parse_error(path, format!("row {row}: cannot parse {name} `{text}`")))
}

/// JSON form of a metric table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricTableDocument {
    pub schema: String,
    #[serde(default)]
    pub contrasts: Option<Vec<String>>,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRow {
    pub subject_id: String,
    pub fold: u32,
    pub region: String,
    pub coalition: String,
    pub metric: f64,
}

/// Reads a metric table from CSV, or JSON when the extension is `.json`.
pub fn read_metric_table(path: &Path, contrasts: &ContrastSet, range: MetricRange) -> Result<MetricTable> {
    let rows = if path.extension().is_some_and(|e| e == "json") {
        read_metric_json(path, contrasts)?
    } else {
        read_metric_csv(path)?
    };
    validate_metric_table(rows, contrasts, range).map_err(|e| Error::InFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn read_metric_csv(path: &Path) -> Result<Vec<RawCell>> {
    let mut reader = open_csv(path, &METRIC_TABLE_HEADER)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(path, e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        rows.push(RawCell {
            subject_id: record[0].to_string(),
            fold: parse_field(path, row, "fold", &record[1])?,
            region: record[2].to_string(),
            coalition: split_coalition(&record[3]),
            metric: parse_field(path, row, "metric", &record[4])?,
            row: Some(row),
        });
    }
    Ok(rows)
}

fn read_metric_json(path: &Path, contrasts: &ContrastSet) -> Result<Vec<RawCell>> {
    let doc: MetricTableDocument = read_json(path, METRIC_TABLE_SCHEMA, |d: &MetricTableDocument| &d.schema)?;
    if let Some(names) = &doc.contrasts {
        if names.as_slice() != contrasts.names() {
            return Err(parse_error(
                path,
                format!("file declares contrasts {names:?}, run uses {:?}", contrasts.names()),
            ));
        }
    }
    Ok(doc
        .rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| RawCell {
            subject_id: r.subject_id,
            fold: r.fold,
            region: r.region,
            coalition: split_coalition(&r.coalition),
            metric: r.metric,
            row: Some(i as u64 + 1),
        })
        .collect())
}

pub fn write_metric_table_csv(table: &MetricTable, path: &Path) -> Result<()> {
    let contrasts = table.contrasts();
    let mut out = CsvOut::create(path, METRIC_TABLE_HEADER)?;
    for (key, game) in table.cells() {
        for coalition in contrasts.coalitions() {
            out.row([
                key.subject_id.clone(),
                key.fold.to_string(),
                key.region.clone(),
                contrasts.format_coalition(coalition),
                fmt_f64(game[coalition.mask() as usize]),
            ])?;
        }
    }
    out.finish()
}

fn ranks_in_contrast_order(
    path: &Path,
    context: &str,
    entries: &BTreeMap<usize, u32>,
    contrasts: &ContrastSet,
) -> Result<RankVector> {
    if entries.len() != contrasts.len() {
        return Err(parse_error(
            path,
            format!("{context}: ranks given for {} of {} contrasts", entries.len(), contrasts.len()),
        ));
    }
    RankVector::new(entries.values().copied().collect()).map_err(|e| parse_error(path, format!("{context}: {e}")))
}

/// Per-subject consensus of an annotator file (`subject_id,annotator,contrast,rank`).
pub fn read_annotator_consensus(path: &Path, contrasts: &ContrastSet) -> Result<BTreeMap<String, RankVector>> {
    let mut reader = open_csv(path, &ANNOTATOR_HEADER)?;
    // subject -> annotator -> contrast index -> rank
    let mut grid: BTreeMap<String, BTreeMap<String, BTreeMap<usize, u32>>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(path, e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        let contrast = contrasts
            .index_of(&record[2])
            .ok_or_else(|| parse_error(path, format!("row {row}: unknown contrast `{}`", &record[2])))?;
        let rank: u32 = parse_field(path, row, "rank", &record[3])?;
        let slot = grid
            .entry(record[0].to_string())
            .or_default()
            .entry(record[1].to_string())
            .or_default();
        if slot.insert(contrast, rank).is_some() {
            return Err(parse_error(path, format!("row {row}: duplicate rank for `{}`", &record[2])));
        }
    }
    grid.into_iter()
        .map(|(subject, annotators)| {
            let rankings = annotators
                .iter()
                .map(|(annotator, entries)| {
                    ranks_in_contrast_order(path, &format!("subject `{subject}`, annotator `{annotator}`"), entries, contrasts)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((subject, consensus_rank(&rankings)?))
        })
        .collect()
}

/// A cohort-wide reference ranking from a `contrast,rank` CSV.
pub fn read_reference_file(path: &Path, contrasts: &ContrastSet) -> Result<ReferenceRanking> {
    let mut reader = open_csv(path, &REFERENCE_HEADER)?;
    let mut entries = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(path, e.to_string()))?;
        let row = record.position().map_or(0, |p| p.line());
        let contrast = contrasts
            .index_of(&record[0])
            .ok_or_else(|| parse_error(path, format!("row {row}: unknown contrast `{}`", &record[0])))?;
        let rank = parse_field(path, row, "rank", &record[1])?;
        if entries.insert(contrast, rank).is_some() {
            return Err(parse_error(path, format!("row {row}: duplicate contrast `{}`", &record[0])));
        }
    }
    let stem = path.file_stem().map_or_else(|| "reference".into(), |s| s.to_string_lossy());
    Ok(ReferenceRanking {
        label: format!("custom:{stem}"),
        ranks: ranks_in_contrast_order(path, "reference", &entries, contrasts)?,
    })
}

/// Buffered CSV writer with I/O errors tied to the path.
pub(crate) struct CsvOut<'a> {
    path: &'a Path,
    writer: csv::Writer<BufWriter<File>>,
}

impl<'a> CsvOut<'a> {
    pub(crate) fn create<H: AsRef<[u8]>>(path: &'a Path, header: impl IntoIterator<Item = H>) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = Self {
            path,
            writer: csv::Writer::from_writer(BufWriter::new(file)),
        };
        out.row(header)?;
        Ok(out)
    }

    pub(crate) fn row<F: AsRef<[u8]>>(&mut self, fields: impl IntoIterator<Item = F>) -> Result<()> {
        self.writer.write_record(fields).map_err(|e| csv_io(self.path, e))
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(self.path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_error(path, format!("{other:?}")),
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_error(path, e.to_string()))?;
    text.push('\n');
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a JSON document and checks its `schema` tag. Structural mismatches
/// are reported as schema errors naming the file.
pub fn read_json<T, F>(path: &Path, schema: &str, tag: F) -> Result<T>
where
    T: DeserializeOwned,
    F: Fn(&T) -> &String,
{
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: T = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if tag(&doc) != schema {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("expected schema `{schema}`, found `{}`", tag(&doc)),
        });
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 0.0, 1.0, 5e-324, 0.30000000000000004] {
            let text = fmt_f64(v);
            assert_eq!(text.parse::<f64>().unwrap(), v, "{text}");
            let mantissa = text.split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn coalition_text() {
        assert!(split_coalition("EMPTY").is_empty());
        assert_eq!(split_coalition("T1c+T2f"), vec!["T1c", "T2f"]);
    }
}
