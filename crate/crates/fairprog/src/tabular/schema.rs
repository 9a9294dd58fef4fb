//! Column and schema descriptors for typed tabular data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::stable_hash_hex;

/// What a column holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Finite set of category labels; encoded one-hot.
    Categorical { categories: Vec<String> },
    /// Real value in `[min, max]`; encoded min-max normalized to `[0, 1]`.
    Numeric { min: f64, max: f64 },
}

impl ColumnKind {
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            ColumnKind::Categorical { categories } => Some(categories.len()),
            ColumnKind::Numeric { .. } => None,
        }
    }

    pub fn is_binary_categorical(&self) -> bool {
        self.cardinality() == Some(2)
    }

    /// Width of this column's group in the encoded feature vector.
    pub fn encoded_width(&self) -> usize {
        match self {
            ColumnKind::Categorical { categories } => categories.len(),
            ColumnKind::Numeric { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Categorical {
                categories: categories.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn numeric(name: &str, min: f64, max: f64) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind: ColumnKind::Numeric { min, max },
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            ColumnKind::Categorical { categories } => {
                if categories.len() < 2 {
                    return Err(Error::Schema(format!(
                        "column '{}': categorical cardinality must be >= 2, got {}",
                        self.name,
                        categories.len()
                    )));
                }
                let mut seen = std::collections::BTreeSet::new();
                for c in categories {
                    if !seen.insert(c) {
                        return Err(Error::Schema(format!(
                            "column '{}': duplicate category '{}'",
                            self.name, c
                        )));
                    }
                }
            }
            ColumnKind::Numeric { min, max } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(Error::Schema(format!(
                        "column '{}': numeric range requires finite min < max, got [{}, {}]",
                        self.name, min, max
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An ordered set of columns with designated binary label and protected columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub label_column: String,
    pub protected_column: String,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>, label: &str, protected: &str) -> Result<Self> {
        let schema = Schema {
            columns,
            label_column: label.to_string(),
            protected_column: protected.to_string(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for col in &self.columns {
            col.validate()?;
            if !names.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", col.name)));
            }
        }
        if self.label_column == self.protected_column {
            return Err(Error::Schema(
                "label and protected columns must be distinct".into(),
            ));
        }
        for (role, name) in [
            ("label", &self.label_column),
            ("protected", &self.protected_column),
        ] {
            let col = self.column(name).ok_or_else(|| {
                Error::Schema(format!("{role} column '{name}' not found in schema"))
            })?;
            if !col.kind.is_binary_categorical() {
                return Err(Error::Schema(format!(
                    "{role} column '{name}' must be categorical with cardinality 2"
                )));
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Columns that are neither the label nor the protected attribute,
    /// in schema order.
    pub fn feature_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| c.name != self.label_column && c.name != self.protected_column)
    }

    /// Re-designate the label column. Rows are untouched; only the role changes.
    pub fn with_label(&self, label: &str) -> Result<Schema> {
        Schema::new(self.columns.clone(), label, &self.protected_column)
    }

    /// Stable fingerprint of the full schema (columns, kinds, designations).
    /// Checkpoints carry it so that mismatched artifacts are rejected early.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        stable_hash_hex(json.as_bytes())
    }

    pub fn to_json_file(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path)?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }
}
