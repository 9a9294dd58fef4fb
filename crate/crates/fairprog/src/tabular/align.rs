//! Column alignment between schemas whose columns are subsets/supersets of
//! each other. The shared set determines which columns the realism
//! discriminator may see.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::schema::Schema;

/// Partition of two schemas' columns.
///
/// `shared` keeps source-schema order. Matching is by name with exact kind
/// equality; there is no fuzzy matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub shared: Vec<String>,
    pub dropped_from_target: Vec<String>,
    pub added_in_source: Vec<String>,
}

/// Compute the column partition between a source and a target schema.
///
/// Requires the target's column names to be a subset or a superset of the
/// source's; a shared name with a different kind is an error.
pub fn align(source: &Schema, target: &Schema) -> Result<AlignmentMap> {
    let mut shared = Vec::new();
    let mut added_in_source = Vec::new();
    for col in &source.columns {
        match target.column(&col.name) {
            Some(tcol) => {
                if tcol.kind != col.kind {
                    return Err(Error::Schema(format!(
                        "column '{}' has mismatched kinds across schemas",
                        col.name
                    )));
                }
                shared.push(col.name.clone());
            }
            None => added_in_source.push(col.name.clone()),
        }
    }
    let dropped_from_target: Vec<String> = target
        .columns
        .iter()
        .filter(|c| source.column(&c.name).is_none())
        .map(|c| c.name.clone())
        .collect();

    if !added_in_source.is_empty() && !dropped_from_target.is_empty() {
        return Err(Error::Schema(
            "target columns are neither a subset nor a superset of the source columns".into(),
        ));
    }
    if shared.is_empty() {
        return Err(Error::Schema("no shared columns between schemas".into()));
    }
    Ok(AlignmentMap {
        shared,
        dropped_from_target,
        added_in_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::schema::ColumnSpec;

    fn schema_of(names: &[&str]) -> Schema {
        let mut cols = vec![
            ColumnSpec::categorical("y", &["no", "yes"]),
            ColumnSpec::categorical("s", &["g0", "g1"]),
        ];
        for n in names {
            cols.push(ColumnSpec::numeric(n, 0.0, 1.0));
        }
        Schema::new(cols, "y", "s").unwrap()
    }

    #[test]
    fn subset_target() {
        let source = schema_of(&["a", "b", "c"]);
        let target = schema_of(&["a", "b"]);
        let map = align(&source, &target).unwrap();
        assert_eq!(map.shared, vec!["y", "s", "a", "b"]);
        assert_eq!(map.added_in_source, vec!["c"]);
        assert!(map.dropped_from_target.is_empty());
    }

    #[test]
    fn identity_alignment() {
        let s = schema_of(&["a", "b"]);
        let map = align(&s, &s).unwrap();
        assert_eq!(map.shared.len(), s.columns.len());
        assert!(map.added_in_source.is_empty());
        assert!(map.dropped_from_target.is_empty());
    }

    #[test]
    fn superset_target() {
        let source = schema_of(&["a"]);
        let target = schema_of(&["a", "b", "c"]);
        let map = align(&source, &target).unwrap();
        assert_eq!(map.shared, vec!["y", "s", "a"]);
        assert_eq!(map.dropped_from_target, vec!["b", "c"]);
        assert!(map.added_in_source.is_empty());
    }

    #[test]
    fn rejects_incomparable_schemas() {
        let source = schema_of(&["a", "b"]);
        let target = schema_of(&["a", "c"]);
        assert!(align(&source, &target).is_err());
    }

    #[test]
    fn rejects_kind_mismatch() {
        let source = schema_of(&["a"]);
        let mut cols = vec![
            ColumnSpec::categorical("y", &["no", "yes"]),
            ColumnSpec::categorical("s", &["g0", "g1"]),
            ColumnSpec::categorical("a", &["p", "q"]),
        ];
        cols.rotate_left(0);
        let target = Schema::new(cols, "y", "s").unwrap();
        assert!(align(&source, &target).is_err());
    }

    #[test]
    fn shared_is_symmetric_as_a_set() {
        let a = schema_of(&["a", "b", "c"]);
        let b = schema_of(&["a", "b"]);
        let mut ab = align(&a, &b).unwrap().shared;
        let mut ba = align(&b, &a).unwrap().shared;
        ab.sort();
        ba.sort();
        assert_eq!(ab, ba);
    }
}
