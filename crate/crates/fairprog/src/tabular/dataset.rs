//! Datasets: schema-conforming rows, CSV ingestion, and deterministic splits.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::component_rng;

use super::schema::{ColumnKind, Schema};

/// One cell. Categoricals are stored as the index into the column's
/// category list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Category(usize),
    Number(f64),
}

impl Value {
    pub fn as_category(&self) -> Option<usize> {
        match self {
            Value::Category(i) => Some(*i),
            Value::Number(_) => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            Value::Category(_) => None,
        }
    }
}

/// Immutable typed table. Every row conforms to the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<Value>>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>) -> Result<Self> {
        schema.validate()?;
        if rows.is_empty() {
            return Err(Error::Schema("dataset must have at least one row".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            validate_row(&schema, row).map_err(|e| Error::Schema(format!("row {i}: {e}")))?;
        }
        Ok(Dataset { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn value(&self, row: usize, column: &str) -> Option<Value> {
        let idx = self.schema.column_index(column)?;
        self.rows.get(row).map(|r| r[idx])
    }

    /// Same rows under a re-designated label column.
    pub fn with_label(&self, label: &str) -> Result<Dataset> {
        Ok(Dataset {
            schema: self.schema.with_label(label)?,
            rows: self.rows.clone(),
        })
    }

    /// Per-row label bit (0 or 1).
    pub fn labels(&self) -> Vec<usize> {
        let idx = self
            .schema
            .column_index(&self.schema.label_column)
            .expect("label column exists");
        self.rows
            .iter()
            .map(|r| r[idx].as_category().expect("label is categorical"))
            .collect()
    }

    /// Per-row protected bit (0 or 1).
    pub fn protected_bits(&self) -> Vec<usize> {
        let idx = self
            .schema
            .column_index(&self.schema.protected_column)
            .expect("protected column exists");
        self.rows
            .iter()
            .map(|r| r[idx].as_category().expect("protected is categorical"))
            .collect()
    }

    /// Element-wise comparison with numeric tolerance. Categoricals must
    /// match exactly; numerics within `tol` of the column range.
    pub fn approx_eq(&self, other: &Dataset, tol: f64) -> bool {
        if self.schema != other.schema || self.rows.len() != other.rows.len() {
            return false;
        }
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for (col, (va, vb)) in self.schema.columns.iter().zip(a.iter().zip(b.iter())) {
                match (&col.kind, va, vb) {
                    (ColumnKind::Categorical { .. }, Value::Category(x), Value::Category(y)) => {
                        if x != y {
                            return false;
                        }
                    }
                    (ColumnKind::Numeric { min, max }, Value::Number(x), Value::Number(y)) => {
                        if (x - y).abs() > tol * (max - min) {
                            return false;
                        }
                    }
                    _ => return false,
                }
            }
        }
        true
    }

    /// Deterministic disjoint train/val/test partition.
    ///
    /// Fractions must be positive and sum to 1. The shuffle is driven by
    /// `seed` alone, so the same seed always yields the same partition.
    pub fn split(&self, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
        let (ftrain, fval, ftest) = fractions;
        if ftrain <= 0.0 || fval <= 0.0 || ftest <= 0.0 {
            return Err(Error::Config(vec![
                "split fractions must all be positive".into()
            ]));
        }
        if (ftrain + fval + ftest - 1.0).abs() > 1e-9 {
            return Err(Error::Config(vec![format!(
                "split fractions must sum to 1, got {}",
                ftrain + fval + ftest
            )]));
        }
        let n = self.rows.len();
        let n_train = (n as f64 * ftrain).round() as usize;
        let n_val = (n as f64 * fval).round() as usize;
        if n_train == 0 || n_val == 0 || n_train + n_val >= n {
            return Err(Error::Schema(format!(
                "split of {n} rows by ({ftrain}, {fval}, {ftest}) leaves an empty partition"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut component_rng(seed, "tabular-split"));

        let take = |idx: &[usize]| -> Dataset {
            Dataset {
                schema: self.schema.clone(),
                rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            }
        };
        Ok((
            take(&order[..n_train]),
            take(&order[n_train..n_train + n_val]),
            take(&order[n_train + n_val..]),
        ))
    }

    /// Write rows back out as CSV with a header in schema order.
    pub fn to_csv_file(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            let record: Vec<String> = self
                .schema
                .columns
                .iter()
                .zip(row)
                .map(|(col, v)| match (&col.kind, v) {
                    (ColumnKind::Categorical { categories }, Value::Category(i)) => {
                        categories[*i].clone()
                    }
                    (_, Value::Number(x)) => format!("{x}"),
                    _ => unreachable!("row conforms to schema"),
                })
                .collect();
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn validate_row(schema: &Schema, row: &[Value]) -> std::result::Result<(), String> {
    if row.len() != schema.columns.len() {
        return Err(format!(
            "expected {} values, got {}",
            schema.columns.len(),
            row.len()
        ));
    }
    for (col, value) in schema.columns.iter().zip(row) {
        match (&col.kind, value) {
            (ColumnKind::Categorical { categories }, Value::Category(i)) => {
                if *i >= categories.len() {
                    return Err(format!(
                        "column '{}': category index {} out of range {}",
                        col.name,
                        i,
                        categories.len()
                    ));
                }
            }
            (ColumnKind::Numeric { min, max }, Value::Number(v)) => {
                if !v.is_finite() || v < min || v > max {
                    return Err(format!(
                        "column '{}': value {} outside [{}, {}]",
                        col.name, v, min, max
                    ));
                }
            }
            _ => {
                return Err(format!("column '{}': value kind mismatch", col.name));
            }
        }
    }
    Ok(())
}

/// Why a CSV row was rejected during ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowRejection {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub column: String,
    pub reason: String,
}

/// Ingestion summary: kept/rejected counts plus per-row reasons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub ignored_columns: Vec<String>,
    pub rejected: Vec<RowRejection>,
}

/// Parse a CSV file against a schema.
///
/// The header must contain every schema column (any order); extra columns are
/// ignored and listed in the report. Rows that violate the schema are
/// rejected and reported; with `strict` the first violation aborts the load.
pub fn load_csv(path: &Path, schema: &Schema, strict: bool) -> Result<(Dataset, LoadReport)> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let mut column_pos = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h == col.name)
            .ok_or_else(|| Error::Schema(format!("missing column '{}' in CSV header", col.name)))?;
        column_pos.push(pos);
    }
    let ignored: Vec<String> = headers
        .iter()
        .filter(|h| schema.column(h).is_none())
        .map(|h| h.to_string())
        .collect();

    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    let mut rows_read = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        rows_read += 1;
        match parse_record(schema, &column_pos, &record) {
            Ok(row) => rows.push(row),
            Err((column, reason)) => {
                if strict {
                    return Err(Error::Schema(format!(
                        "row {}: column '{}': {} (strict mode)",
                        i + 1,
                        column,
                        reason
                    )));
                }
                rejected.push(RowRejection {
                    row: i + 1,
                    column,
                    reason,
                });
            }
        }
    }

    let report = LoadReport {
        rows_read,
        rows_kept: rows.len(),
        ignored_columns: ignored,
        rejected,
    };
    let dataset = Dataset::new(schema.clone(), rows)
        .map_err(|_| Error::Schema("no valid rows after cleaning".into()))?;
    Ok((dataset, report))
}

fn parse_record(
    schema: &Schema,
    column_pos: &[usize],
    record: &csv::StringRecord,
) -> std::result::Result<Vec<Value>, (String, String)> {
    let mut row = Vec::with_capacity(schema.columns.len());
    for (col, &pos) in schema.columns.iter().zip(column_pos) {
        let cell = record
            .get(pos)
            .ok_or_else(|| (col.name.clone(), "missing cell".to_string()))?;
        match &col.kind {
            ColumnKind::Categorical { categories } => {
                match categories.iter().position(|c| c == cell) {
                    Some(i) => row.push(Value::Category(i)),
                    None => {
                        return Err((
                            col.name.clone(),
                            format!("unknown category '{cell}'"),
                        ))
                    }
                }
            }
            ColumnKind::Numeric { min, max } => match cell.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= *min && v <= *max => row.push(Value::Number(v)),
                Ok(v) => {
                    return Err((
                        col.name.clone(),
                        format!("value {v} outside [{min}, {max}]"),
                    ))
                }
                Err(_) => {
                    return Err((col.name.clone(), format!("unparsable number '{cell}'")))
                }
            },
        }
    }
    Ok(row)
}
