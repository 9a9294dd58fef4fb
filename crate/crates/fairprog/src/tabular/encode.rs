//! Numeric encoding of datasets.
//!
//! The encoded vector for a row is laid out as:
//!
//! ```text
//! [ feature groups in schema order | label bit | protected bit ]
//! ```
//!
//! where each categorical feature occupies a one-hot group, each numeric
//! feature one min-max-normalized slot, and the designated label/protected
//! columns are single 0/1 bits appended at the end. Models that consume
//! `(X, S)` pairs use the first `feature_width + 1` slots with the protected
//! bit moved next to the features (see [`EncodedMatrix::generator_inputs`]).

use std::ops::Range;

use crate::diffnet::Matrix;
use crate::error::{Error, Result};

use super::dataset::{Dataset, Value};
use super::schema::{ColumnKind, Schema};

/// Index layout of an encoded schema.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingLayout {
    feature_groups: Vec<(String, Range<usize>)>,
    feature_width: usize,
    label_column: String,
    protected_column: String,
}

impl EncodingLayout {
    pub fn of(schema: &Schema) -> Self {
        let mut groups = Vec::new();
        let mut at = 0usize;
        for col in schema.feature_columns() {
            let w = col.kind.encoded_width();
            groups.push((col.name.clone(), at..at + w));
            at += w;
        }
        EncodingLayout {
            feature_groups: groups,
            feature_width: at,
            label_column: schema.label_column.clone(),
            protected_column: schema.protected_column.clone(),
        }
    }

    /// Width of the feature block (no label/protected bits).
    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    /// Full encoded width: features + label bit + protected bit.
    pub fn full_width(&self) -> usize {
        self.feature_width + 2
    }

    /// Width of a `(X, S)` vector: features + protected bit.
    pub fn xs_width(&self) -> usize {
        self.feature_width + 1
    }

    pub fn label_slot(&self) -> usize {
        self.feature_width
    }

    pub fn protected_slot(&self) -> usize {
        self.feature_width + 1
    }

    /// Index range of a feature column's group, if it is a feature.
    pub fn group(&self, column: &str) -> Option<Range<usize>> {
        self.feature_groups
            .iter()
            .find(|(name, _)| name == column)
            .map(|(_, r)| r.clone())
    }

    /// All feature groups, in schema order.
    pub fn groups(&self) -> &[(String, Range<usize>)] {
        &self.feature_groups
    }

    /// Ranges of the categorical feature groups, for per-group softmax heads.
    pub fn categorical_groups(&self, schema: &Schema) -> Vec<Range<usize>> {
        self.feature_groups
            .iter()
            .filter(|(name, _)| {
                matches!(
                    schema.column(name).map(|c| &c.kind),
                    Some(ColumnKind::Categorical { .. })
                )
            })
            .map(|(_, r)| r.clone())
            .collect()
    }
}

/// A dataset rendered as real-valued rows plus its layout.
#[derive(Debug, Clone)]
pub struct EncodedMatrix {
    layout: EncodingLayout,
    values: Matrix,
}

impl EncodedMatrix {
    pub fn feature_dim(&self) -> usize {
        self.values.cols()
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn layout(&self) -> &EncodingLayout {
        &self.layout
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// The feature block only (classifier input when the protected column is
    /// excluded, which is the default).
    pub fn features(&self) -> Matrix {
        self.values.gather_columns(&[0..self.layout.feature_width])
    }

    /// Features followed by the protected bit: the `(X, S)` input consumed by
    /// the base autoencoder and by reprogramming generators.
    pub fn generator_inputs(&self) -> Matrix {
        self.values.gather_columns(&[
            0..self.layout.feature_width,
            self.layout.protected_slot()..self.layout.protected_slot() + 1,
        ])
    }

    /// Per-row class index of the label column.
    pub fn labels(&self) -> Vec<usize> {
        let slot = self.layout.label_slot();
        (0..self.values.rows())
            .map(|i| if self.values.get(i, slot) > 0.5 { 1 } else { 0 })
            .collect()
    }

    /// Per-row protected bit as 0.0/1.0.
    pub fn protected_bits(&self) -> Vec<f64> {
        let slot = self.layout.protected_slot();
        (0..self.values.rows())
            .map(|i| self.values.get(i, slot))
            .collect()
    }
}

/// Encode every row: one-hot categoricals, min-max normalized numerics,
/// label and protected columns as trailing bits.
pub fn encode(dataset: &Dataset) -> EncodedMatrix {
    let schema = dataset.schema();
    let layout = EncodingLayout::of(schema);
    let mut values = Matrix::zeros(dataset.len(), layout.full_width());

    let feature_cols: Vec<(usize, &ColumnKind, Range<usize>)> = schema
        .feature_columns()
        .map(|c| {
            (
                schema.column_index(&c.name).unwrap(),
                &c.kind,
                layout.group(&c.name).unwrap(),
            )
        })
        .collect();
    let label_idx = schema.column_index(&schema.label_column).unwrap();
    let protected_idx = schema.column_index(&schema.protected_column).unwrap();

    for (i, row) in dataset.rows().iter().enumerate() {
        let out = values.row_mut(i);
        for (col_idx, kind, range) in &feature_cols {
            match (kind, &row[*col_idx]) {
                (ColumnKind::Categorical { .. }, Value::Category(c)) => {
                    out[range.start + c] = 1.0;
                }
                (ColumnKind::Numeric { min, max }, Value::Number(v)) => {
                    out[range.start] = (v - min) / (max - min);
                }
                _ => unreachable!("rows conform to schema"),
            }
        }
        out[layout.label_slot()] = row[label_idx].as_category().unwrap() as f64;
        out[layout.protected_slot()] = row[protected_idx].as_category().unwrap() as f64;
    }

    EncodedMatrix { layout, values }
}

/// Decode a full-width matrix back to a dataset.
///
/// Categorical groups take the argmax (ties resolve to the lowest index);
/// numerics are clamped to `[0, 1]` and de-normalized; label/protected bits
/// threshold at 0.5.
pub fn decode(matrix: &Matrix, schema: &Schema) -> Result<Dataset> {
    let layout = EncodingLayout::of(schema);
    if matrix.cols() != layout.full_width() {
        return Err(Error::shape(
            layout.full_width().to_string(),
            matrix.cols().to_string(),
            "decode width",
        ));
    }
    let labels: Vec<usize> = (0..matrix.rows())
        .map(|i| bit_to_index(matrix.get(i, layout.label_slot())))
        .collect();
    let s_bits: Vec<usize> = (0..matrix.rows())
        .map(|i| bit_to_index(matrix.get(i, layout.protected_slot())))
        .collect();
    decode_parts(matrix, schema, &layout, &labels, &s_bits)
}

/// Decode a `(X, S)`-width matrix (features + protected bit) using
/// caller-provided label indices.
pub fn decode_generated(matrix: &Matrix, schema: &Schema, labels: &[usize]) -> Result<Dataset> {
    let layout = EncodingLayout::of(schema);
    if matrix.cols() != layout.xs_width() {
        return Err(Error::shape(
            layout.xs_width().to_string(),
            matrix.cols().to_string(),
            "decode_generated width",
        ));
    }
    if labels.len() != matrix.rows() {
        return Err(Error::shape(
            matrix.rows().to_string(),
            labels.len().to_string(),
            "decode_generated label count",
        ));
    }
    let s_bits: Vec<usize> = (0..matrix.rows())
        .map(|i| bit_to_index(matrix.get(i, layout.feature_width())))
        .collect();
    decode_parts(matrix, schema, &layout, labels, &s_bits)
}

fn decode_parts(
    matrix: &Matrix,
    schema: &Schema,
    layout: &EncodingLayout,
    labels: &[usize],
    s_bits: &[usize],
) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(matrix.rows());
    let label_idx = schema.column_index(&schema.label_column).unwrap();
    let protected_idx = schema.column_index(&schema.protected_column).unwrap();

    for i in 0..matrix.rows() {
        let enc = matrix.row(i);
        let mut row = Vec::with_capacity(schema.columns.len());
        for (col_idx, col) in schema.columns.iter().enumerate() {
            if col_idx == label_idx {
                row.push(Value::Category(labels[i]));
            } else if col_idx == protected_idx {
                row.push(Value::Category(s_bits[i]));
            } else {
                let range = layout.group(&col.name).unwrap();
                match &col.kind {
                    ColumnKind::Categorical { .. } => {
                        row.push(Value::Category(argmax_lowest(&enc[range])));
                    }
                    ColumnKind::Numeric { min, max } => {
                        let v = enc[range.start].clamp(0.0, 1.0);
                        row.push(Value::Number(min + v * (max - min)));
                    }
                }
            }
        }
        rows.push(row);
    }
    Dataset::new(schema.clone(), rows)
}

fn bit_to_index(bit: f64) -> usize {
    // Thresholding at 0.5 with ties to the lower category matches the
    // argmax tie rule for one-hot groups.
    usize::from(bit > 0.5)
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::schema::ColumnSpec;

    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                ColumnSpec::categorical("c3", &["a", "b", "c"]),
                ColumnSpec::categorical("y", &["no", "yes"]),
                ColumnSpec::numeric("x", 0.0, 10.0),
                ColumnSpec::categorical("s", &["g0", "g1"]),
            ],
            "y",
            "s",
        )
        .unwrap()
    }

    fn toy_dataset() -> Dataset {
        Dataset::new(
            toy_schema(),
            vec![
                vec![
                    Value::Category(1),
                    Value::Category(0),
                    Value::Number(5.0),
                    Value::Category(1),
                ],
                vec![
                    Value::Category(2),
                    Value::Category(1),
                    Value::Number(0.0),
                    Value::Category(0),
                ],
            ],
        )
        .unwrap()
    }

    #[test]
    fn encodes_one_hot_and_normalized() {
        let enc = encode(&toy_dataset());
        // layout: c3 one-hot (3) | x (1) | y bit | s bit
        assert_eq!(enc.feature_dim(), 6);
        assert_eq!(enc.values().row(0), &[0.0, 1.0, 0.0, 0.5, 0.0, 1.0]);
        assert_eq!(enc.values().row(1), &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn one_hot_groups_sum_to_one() {
        let enc = encode(&toy_dataset());
        let range = enc.layout().group("c3").unwrap();
        for i in 0..enc.len() {
            let sum: f64 = enc.values().row(i)[range.clone()].iter().sum();
            assert_eq!(sum, 1.0);
        }
    }

    #[test]
    fn decode_argmax_and_denormalize() {
        let schema = toy_schema();
        // c3 soft scores [0.1, 0.7, 0.2] -> category index 1 ("b")
        let m = Matrix::from_rows(&[vec![0.1, 0.7, 0.2, 0.5, 1.0, 0.0]]);
        let ds = decode(&m, &schema).unwrap();
        assert_eq!(ds.value(0, "c3"), Some(Value::Category(1)));
        assert_eq!(ds.value(0, "x"), Some(Value::Number(5.0)));
        assert_eq!(ds.value(0, "y"), Some(Value::Category(1)));
        assert_eq!(ds.value(0, "s"), Some(Value::Category(0)));
    }

    #[test]
    fn decode_tie_resolves_to_lowest_index() {
        let schema = Schema::new(
            vec![
                ColumnSpec::categorical("c2", &["first", "second"]),
                ColumnSpec::categorical("y", &["no", "yes"]),
                ColumnSpec::categorical("s", &["g0", "g1"]),
            ],
            "y",
            "s",
        )
        .unwrap();
        let m = Matrix::from_rows(&[vec![0.5, 0.5, 0.5, 0.5]]);
        let ds = decode(&m, &schema).unwrap();
        assert_eq!(ds.value(0, "c2"), Some(Value::Category(0)));
        assert_eq!(ds.value(0, "y"), Some(Value::Category(0)));
    }

    #[test]
    fn roundtrip_identity() {
        let ds = toy_dataset();
        let enc = encode(&ds);
        let back = decode(enc.values(), ds.schema()).unwrap();
        assert!(ds.approx_eq(&back, 1e-12));
    }

    #[test]
    fn decode_rejects_wrong_width() {
        let m = Matrix::zeros(1, 3);
        assert!(decode(&m, &toy_schema()).is_err());
    }

    #[test]
    fn generator_inputs_are_features_plus_protected_bit() {
        let enc = encode(&toy_dataset());
        let gi = enc.generator_inputs();
        assert_eq!(gi.cols(), 5);
        assert_eq!(gi.row(0), &[0.0, 1.0, 0.0, 0.5, 1.0]);
    }
}
