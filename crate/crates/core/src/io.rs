//! File formats: time-indexed CSV tables, matrix CSVs, the model container
//! and atomic output writes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{CutoffRule, SpectralScales};
use crate::error::{Error, Result};
use crate::gp::{Dataset, DatasetStack, Hyperparameters, TrainedModel};
use crate::signal::{Kind, TimeSeries};

pub const MODEL_MAGIC: &str = "FORCEGP-MODEL";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

fn parse_error(path: &Path, line: Option<u64>, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, message: message.into() }
}

/// Writes through a sibling temporary file and renames it into place, so
/// readers never observe a partial file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// A CSV whose first column is `time` and whose other columns are channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTable {
    pub time: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl TimeTable {
    pub fn new(time: Vec<f64>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() || columns.iter().any(|c| c.len() != time.len()) {
            return Err(Error::DimensionMismatch("table columns must match the names and the time column".into()));
        }
        Ok(Self { time, names, columns })
    }

    pub fn from_series(series: &[TimeSeries], names: Vec<String>) -> Result<Self> {
        let time = series.first().ok_or_else(|| Error::InvalidInput("no series to tabulate".into()))?.t().to_vec();
        if series.iter().any(|s| s.t() != time.as_slice()) {
            return Err(Error::DimensionMismatch("tabulated series must share a time vector".into()));
        }
        Self::new(time, names, series.iter().map(|s| s.values().to_vec()).collect())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn series(&self, column: usize, kind: Kind, unit: &str) -> Result<TimeSeries> {
        let values = self
            .columns
            .get(column)
            .ok_or_else(|| Error::InvalidInput(format!("column {column} out of range")))?
            .clone();
        TimeSeries::new(self.time.clone(), values, kind, unit)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => parse_error(path, None, e.to_string()),
            _ => Error::Csv(e),
        })?;
        let header = reader.headers().map_err(|e| parse_error(path, Some(1), e.to_string()))?.clone();
        if header.get(0) != Some("time") {
            return Err(parse_error(path, Some(1), "first column must be named `time`"));
        }
        if header.len() < 2 {
            return Err(parse_error(path, Some(1), "no channel columns after `time`"));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut time = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line());
                parse_error(path, line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line());
            let mut values = record.iter().map(|field| {
                field.parse::<f64>().map_err(|_| parse_error(path, line, format!("`{field}` is not a number")))
            });
            time.push(values.next().expect("csv enforces record width")?);
            for col in columns.iter_mut() {
                col.push(values.next().expect("csv enforces record width")?);
            }
        }
        if time.is_empty() {
            return Err(parse_error(path, None, "no data rows"));
        }
        Self::new(time, names, columns)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, t) in self.time.iter().enumerate() {
            let _ = write!(out, "{t}");
            for c in &self.columns {
                let _ = write!(out, ",{}", c[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv().as_bytes())
    }
}

/// Reads a numeric matrix with one header row; rows are sensors, columns modes.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_error(path, None, e.to_string()))?;
    let n_cols = reader.headers().map_err(|e| parse_error(path, Some(1), e.to_string()))?.len();
    let mut values = Vec::new();
    let mut n_rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(path, e.position().map(|p| p.line()), e.to_string()))?;
        let line = record.position().map(|p| p.line());
        for field in record.iter() {
            values.push(field.parse::<f64>().map_err(|_| parse_error(path, line, format!("`{field}` is not a number")))?);
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(parse_error(path, None, "no data rows"));
    }
    Ok(DMatrix::from_row_slice(n_rows, n_cols, &values))
}

pub fn matrix_to_csv(m: &DMatrix<f64>, names: &[String]) -> String {
    let mut out = names.join(",");
    out.push('\n');
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Hex sha256 of a series' time stamps and values as little-endian bytes.
pub fn series_digest(series: &TimeSeries) -> String {
    let mut hasher = Sha256::new();
    for v in series.t().iter().chain(series.values()) {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredDataset {
    pub name: String,
    pub group: usize,
    pub series: TimeSeries,
    pub sha256: String,
}

/// Persisted model: everything needed to rebuild the factorization exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub magic: String,
    pub schema_version: u32,
    pub theta: Hyperparameters,
    pub frequencies: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rule: CutoffRule,
    pub reference: usize,
    pub datasets: Vec<StoredDataset>,
    pub log_likelihood: f64,
    pub elimination_ratio: f64,
}

impl ModelFile {
    pub fn from_model(model: &TrainedModel, names: &[String], rule: CutoffRule, elimination_ratio: f64) -> Result<Self> {
        let entries = model.stack().entries();
        if names.len() != entries.len() {
            return Err(Error::DimensionMismatch(format!("{} names for {} datasets", names.len(), entries.len())));
        }
        let datasets = entries
            .iter()
            .zip(names)
            .map(|(d, name)| StoredDataset {
                name: name.clone(),
                group: d.group,
                series: d.series.clone(),
                sha256: series_digest(&d.series),
            })
            .collect();
        Ok(Self {
            magic: MODEL_MAGIC.to_string(),
            schema_version: MODEL_SCHEMA_VERSION,
            theta: model.theta().clone(),
            frequencies: model.scales().freqs().to_vec(),
            lambda: model.scales().lambda().to_vec(),
            rule,
            reference: model.stack().reference(),
            datasets,
            log_likelihood: model.log_likelihood(),
            elimination_ratio,
        })
    }

    /// Validates the header and digests, then re-derives the factorization.
    pub fn to_model(&self) -> Result<TrainedModel> {
        if self.magic != MODEL_MAGIC {
            return Err(Error::InvalidInput(format!("not a model file (magic `{}`)", self.magic)));
        }
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!("unsupported model schema version {}", self.schema_version)));
        }
        for d in &self.datasets {
            if series_digest(&d.series) != d.sha256 {
                return Err(Error::InvalidInput(format!("dataset `{}` does not match its digest", d.name)));
            }
        }
        let entries = self.datasets.iter().map(|d| Dataset { series: d.series.clone(), group: d.group }).collect();
        let stack = DatasetStack::new(entries, self.reference)?;
        let scales = SpectralScales::new(self.frequencies.clone(), self.lambda.clone())?;
        let theta = Hyperparameters::new(self.theta.sigma_s2, self.theta.sigma_n2.clone())?;
        TrainedModel::from_parts(stack, scales, theta)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| parse_error(path, Some(e.line() as u64), e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        atomic_write(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}
