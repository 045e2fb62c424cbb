//! File formats: dataset CSV, imputed-set CSV, raw results JSON-lines and
//! metrics CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use medmi_core::data::DataError;
use medmi_core::impute::ImputedSet;
use medmi_core::simstudy::{MetricRow, RawRecord, SCHEMA_VERSION};
use medmi_core::{Dataset, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token marking a missing cell. Case-sensitive; empty cells are rejected.
pub const NA: &str = "NA";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub(crate) fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn header(data: &Dataset) -> Vec<String> {
    data.vars().map(|v| data.column_name(v)).collect()
}

fn cell(value: Option<bool>) -> &'static str {
    match value {
        None => NA,
        Some(true) => "1",
        Some(false) => "0",
    }
}

/// Write the observed part of a dataset; masked cells become `NA`.
pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(data))?;
    let vars: Vec<Var> = data.vars().collect();
    for row in 0..data.n() {
        w.write_record(vars.iter().map(|&v| cell(data.get(row, v))))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(data: &Dataset, path: &Path) -> Result<(), IoError> {
    write_dataset(data, create(path)?)
}

/// Parse a dataset. The seven study columns must come first, in order;
/// further columns are auxiliary. `A` and `C1` must be fully observed.
pub fn read_dataset<R: Read>(input: R) -> Result<Dataset, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let names: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let study: Vec<&str> = Var::STUDY.iter().map(|v| v.name().unwrap()).collect();
    if names.len() < study.len() || names[..study.len()] != study[..] {
        return Err(IoError::Schema(format!("header must start with {}, got {}", study.join(","), names.join(","))));
    }
    let aux: Vec<String> = names[study.len()..].to_vec();
    if let Some(dup) = aux.iter().enumerate().find(|(i, a)| study.contains(&a.as_str()) || aux[..*i].contains(a)) {
        return Err(IoError::Schema(format!("duplicate column `{}`", dup.1)));
    }
    let (mut values, mut missing) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(IoError::Schema(format!("row {}: expected {} fields, got {}", line + 1, names.len(), rec.len())));
        }
        let (mut v, mut m) = (0u32, 0u32);
        for (j, field) in rec.iter().enumerate() {
            match field.trim() {
                "1" => v |= 1 << j,
                "0" => {}
                NA => m |= 1 << j,
                other => {
                    return Err(IoError::Schema(format!("row {}, column {}: expected 0, 1 or {NA}, got `{other}`", line + 1, names[j])))
                }
            }
        }
        values.push(v);
        missing.push(m);
    }
    if values.is_empty() {
        return Err(DataError::Empty.into());
    }
    let data = Dataset::with_mask(aux, values, missing)?;
    for var in [Var::A, Var::C1] {
        if data.require_complete(&[var]).is_err() {
            return Err(DataError::MustBeComplete(var).into());
        }
    }
    Ok(data)
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset, IoError> {
    read_dataset(BufReader::new(open(path)?))
}

/// All completed datasets stacked, with a leading 1-based `imputation`
/// column.
pub fn write_imputed<W: Write>(set: &ImputedSet, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let base = set.base();
    let mut head = vec!["imputation".to_string()];
    head.extend(header(base));
    w.write_record(&head)?;
    let vars: Vec<Var> = base.vars().collect();
    for j in 0..set.m() {
        let label = (j + 1).to_string();
        for &row in set.rows(j) {
            let mut rec = vec![label.as_str()];
            rec.extend(vars.iter().map(|v| cell(Some(v.of(row)))));
            w.write_record(rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    record: T,
}

/// One JSON object per record, each tagged with the schema version.
pub fn write_records<W: Write>(records: &[RawRecord], mut out: W) -> Result<(), IoError> {
    for record in records {
        let line = serde_json::to_string(&Versioned { schema_version: SCHEMA_VERSION, record })
            .map_err(|source| IoError::Json { line: 0, source })?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<RawRecord>, IoError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Versioned<RawRecord> = serde_json::from_str(&line).map_err(|source| IoError::Json { line: i + 1, source })?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(IoError::Schema(format!("line {}: schema version {} (expected {SCHEMA_VERSION})", i + 1, v.schema_version)));
        }
        out.push(v.record);
    }
    Ok(out)
}

/// Metrics table, one row per `(m-DAG, estimator, estimand, method,
/// approach)`, led by a `schema_version` column.
pub fn write_metrics<W: Write>(rows: &[MetricRow], out: W) -> Result<(), IoError> {
    if rows.is_empty() {
        return Err(IoError::Schema("no metric rows to write".into()));
    }
    // csv cannot serialize flattened structs: write the rows plainly, then
    // re-emit them behind the version column.
    let mut inner = csv::Writer::from_writer(Vec::new());
    for row in rows {
        inner.serialize(row)?;
    }
    let bytes = inner.into_inner().map_err(|e| e.into_error())?;
    let mut plain = csv::Reader::from_reader(bytes.as_slice());
    let mut w = csv::Writer::from_writer(out);
    let version = SCHEMA_VERSION.to_string();
    w.write_record(std::iter::once("schema_version").chain(plain.headers()?.iter()))?;
    for rec in plain.records() {
        w.write_record(std::iter::once(version.as_str()).chain(rec?.iter()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricRow>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("schema_version") {
        return Err(IoError::Schema("metrics file lacks a schema_version column".into()));
    }
    let inner_headers: csv::StringRecord = headers.iter().skip(1).collect();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let version: u32 = rec.get(0).unwrap_or("").parse().map_err(|_| IoError::Schema("bad schema_version".into()))?;
        if version != SCHEMA_VERSION {
            return Err(IoError::Schema(format!("metrics schema version {version} (expected {SCHEMA_VERSION})")));
        }
        let inner: csv::StringRecord = rec.iter().skip(1).collect();
        out.push(inner.deserialize(Some(&inner_headers))?);
    }
    Ok(out)
}
