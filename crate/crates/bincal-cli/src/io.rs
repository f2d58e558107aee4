//! File formats: CSV tables with line-numbered diagnostics, the JSON model
//! file shared by batch and shift calibrators, and atomic writes
//! (write-temp-then-rename so a crash never leaves a torn file).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use bincal::batch::{BinEstimate, CalibratorModel};
use bincal::binning::BinningScheme;

use crate::commands::CliError;

/// On-disk model: a batch calibrator, or a shift calibrator when the
/// weighted fields are present.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub scheme: BinningScheme,
    pub alpha: f64,
    pub bins: Vec<BinEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(rename = "U", skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_mass: Option<Vec<Option<f64>>>,
}

impl ModelFile {
    pub fn from_batch(model: &CalibratorModel) -> Self {
        Self {
            scheme: model.scheme().clone(),
            alpha: model.alpha(),
            bins: model.bins().to_vec(),
            n: None,
            lower: None,
            upper: None,
            rel_mass: None,
        }
    }

    /// Calibrated probability plus the stored per-bin radius.
    pub fn predict(&self, score: f64) -> Result<(f64, Option<f64>), CliError> {
        let bin = self.scheme.assign(score)?;
        let est = &self.bins[bin];
        match est.mean {
            Some(mean) => Ok((mean, est.radius)),
            None => Err(CliError::Validation(format!(
                "bin {bin} is empty in the model; refit with fewer bins or uniform-mass binning"
            ))),
        }
    }
}

pub fn read_model(path: &Path) -> Result<ModelFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let model: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    if model.bins.len() != model.scheme.bin_count() {
        return Err(CliError::Validation(format!(
            "{}: {} bins in the model vs {} in its scheme",
            path.display(),
            model.bins.len(),
            model.scheme.bin_count()
        )));
    }
    Ok(model)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serialization: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Write to a sibling temp file, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::Validation(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
    pub path: String,
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        rows.push(record);
    }
    Ok(Table {
        headers,
        rows,
        path: path.display().to_string(),
    })
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| {
                CliError::Validation(format!(
                    "{}: missing column '{name}' (found: {})",
                    self.path,
                    self.headers.join(",")
                ))
            })
    }

    pub fn maybe_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn line_of(&self, row: &csv::StringRecord) -> u64 {
        row.position().map_or(0, |p| p.line())
    }

    pub fn parse_f64(&self, row: &csv::StringRecord, col: usize) -> Result<f64, CliError> {
        let raw = row.get(col).unwrap_or("");
        raw.trim().parse::<f64>().map_err(|_| {
            CliError::Validation(format!(
                "{}: line {}: '{}' in column '{}' is not a number",
                self.path,
                self.line_of(row),
                raw,
                self.headers[col]
            ))
        })
    }

    pub fn parse_score(&self, row: &csv::StringRecord, col: usize) -> Result<f64, CliError> {
        let value = self.parse_f64(row, col)?;
        if !(0.0..=1.0).contains(&value) {
            return Err(CliError::Validation(format!(
                "{}: line {}: score {} outside [0, 1]",
                self.path,
                self.line_of(row),
                value
            )));
        }
        Ok(value)
    }

    pub fn parse_label(&self, row: &csv::StringRecord, col: usize) -> Result<u8, CliError> {
        let raw = row.get(col).unwrap_or("").trim();
        match raw {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err(CliError::Validation(format!(
                "{}: line {}: label '{}' is not 0 or 1",
                self.path,
                self.line_of(row),
                raw
            ))),
        }
    }
}

/// `score,label` files.
pub fn read_score_label(path: &Path) -> Result<(Vec<f64>, Vec<u8>), CliError> {
    let table = read_table(path)?;
    let score_col = table.column("score")?;
    let label_col = table.column("label")?;
    let mut scores = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        scores.push(table.parse_score(row, score_col)?);
        labels.push(table.parse_label(row, label_col)?);
    }
    Ok((scores, labels))
}

/// Single `score` column.
pub fn read_scores(path: &Path) -> Result<Vec<f64>, CliError> {
    let table = read_table(path)?;
    let col = table.column("score")?;
    table
        .rows
        .iter()
        .map(|row| table.parse_score(row, col))
        .collect()
}

/// `p,label` files for evaluation.
pub fn read_predictions(path: &Path) -> Result<(Vec<f64>, Vec<u8>), CliError> {
    let table = read_table(path)?;
    let p_col = table.column("p")?;
    let label_col = table.column("label")?;
    let mut preds = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        preds.push(table.parse_score(row, p_col)?);
        labels.push(table.parse_label(row, label_col)?);
    }
    Ok((preds, labels))
}

/// Every column is a feature coordinate.
pub fn read_features(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let table = read_table(path)?;
    if table.headers.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no feature columns",
            table.path
        )));
    }
    table
        .rows
        .iter()
        .map(|row| {
            (0..table.headers.len())
                .map(|c| table.parse_f64(row, c))
                .collect()
        })
        .collect()
}

/// Rows of a shift-calibration file: scores, labels, optional explicit
/// weights, and any remaining columns as feature coordinates.
pub struct ShiftRows {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub weights: Option<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
}

pub fn read_shift_rows(path: &Path) -> Result<ShiftRows, CliError> {
    let table = read_table(path)?;
    let score_col = table.column("score")?;
    let label_col = table.column("label")?;
    let weight_col = table.maybe_column("weight");
    let feature_cols: Vec<usize> = (0..table.headers.len())
        .filter(|&c| c != score_col && c != label_col && Some(c) != weight_col)
        .collect();
    let mut out = ShiftRows {
        scores: Vec::with_capacity(table.rows.len()),
        labels: Vec::with_capacity(table.rows.len()),
        weights: weight_col.map(|_| Vec::with_capacity(table.rows.len())),
        features: Vec::with_capacity(table.rows.len()),
    };
    for row in &table.rows {
        out.scores.push(table.parse_score(row, score_col)?);
        out.labels.push(table.parse_label(row, label_col)?);
        if let (Some(col), Some(weights)) = (weight_col, out.weights.as_mut()) {
            weights.push(table.parse_f64(row, col)?);
        }
        out.features.push(
            feature_cols
                .iter()
                .map(|&c| table.parse_f64(row, c))
                .collect::<Result<Vec<f64>, CliError>>()?,
        );
    }
    Ok(out)
}

/// Render rows into CSV bytes with a header, using shortest-round-trip
/// float formatting throughout.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).expect("in-memory write");
    for row in rows {
        writer.write_record(row).expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

/// Shortest decimal that parses back to the same binary64 value.
pub fn fmt_f64(value: f64) -> String {
    format!("{value}")
}
