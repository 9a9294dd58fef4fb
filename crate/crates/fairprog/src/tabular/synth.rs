//! Seeded synthetic tabular data with a planted protected-attribute bias.
//!
//! Every feature column has a fixed base distribution derived from the
//! column name alone, so two schemas sharing a column name produce
//! identically distributed values for it. Columns marked `biased` draw from
//! an `s`-conditional distribution with probability `bias_strength` and from
//! the base distribution otherwise; at strength 0 every feature is exactly
//! independent of `s` by construction. Outcome columns are sampled from a
//! logistic model over feature columns only, so any correlation between an
//! outcome and `s` flows solely through the biased features.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{component_rng, fnv1a_64};

use super::dataset::{Dataset, Value};
use super::schema::{ColumnKind, ColumnSpec, Schema};

/// How a synthetic column is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthRole {
    /// The binary protected attribute, Bernoulli(0.5).
    Protected,
    /// Independent draw from the column's base distribution; when `biased`,
    /// mixed with an `s`-conditional distribution at the spec's strength.
    Feature { biased: bool },
    /// Binary column sampled as Bernoulli(sigmoid(sharpness * score)), where
    /// score is a weighted sum of centered feature values.
    Outcome {
        weights: Vec<(String, f64)>,
        sharpness: f64,
    },
    /// Noisy copy of another feature column: with probability `mix` the
    /// normalized value (or category index) carries over, otherwise a fresh
    /// base draw. Keeps the column's marginal realistic while capping the
    /// table's intrinsic dimension.
    Derived { from: String, mix: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthColumn {
    pub spec: ColumnSpec,
    pub role: SynthRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub columns: Vec<SynthColumn>,
    pub label_column: String,
    pub n_rows: usize,
    pub bias_strength: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// The tabular schema this spec generates.
    pub fn schema(&self) -> Result<Schema> {
        let protected: Vec<&SynthColumn> = self
            .columns
            .iter()
            .filter(|c| c.role == SynthRole::Protected)
            .collect();
        if protected.len() != 1 {
            return Err(Error::Config(vec![format!(
                "exactly one protected column required, found {}",
                protected.len()
            )]));
        }
        Schema::new(
            self.columns.iter().map(|c| c.spec.clone()).collect(),
            &self.label_column,
            &protected[0].spec.name,
        )
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_rows == 0 {
            problems.push("n_rows must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.bias_strength) {
            problems.push(format!(
                "bias_strength must be in [0, 1], got {}",
                self.bias_strength
            ));
        }
        for col in &self.columns {
            match &col.role {
                SynthRole::Outcome { weights, sharpness } => {
                    if !matches!(&col.spec.kind, ColumnKind::Categorical { categories } if categories.len() == 2)
                    {
                        problems.push(format!(
                            "outcome column '{}' must be binary categorical",
                            col.spec.name
                        ));
                    }
                    if *sharpness <= 0.0 {
                        problems.push(format!(
                            "outcome column '{}': sharpness must be positive",
                            col.spec.name
                        ));
                    }
                    for (name, _) in weights {
                        let ok = self.columns.iter().any(|c| {
                            c.spec.name == *name
                                && matches!(c.role, SynthRole::Feature { .. })
                        });
                        if !ok {
                            problems.push(format!(
                                "outcome column '{}' references '{}' which is not a feature",
                                col.spec.name, name
                            ));
                        }
                    }
                }
                SynthRole::Protected => {
                    if !col.spec.kind.is_binary_categorical() {
                        problems.push(format!(
                            "protected column '{}' must be binary categorical",
                            col.spec.name
                        ));
                    }
                }
                SynthRole::Derived { from, mix } => {
                    if !(0.0..=1.0).contains(mix) {
                        problems.push(format!(
                            "derived column '{}': mix must be in [0, 1]",
                            col.spec.name
                        ));
                    }
                    let ok = self.columns.iter().any(|c| {
                        c.spec.name == *from && matches!(c.role, SynthRole::Feature { .. })
                    });
                    if !ok {
                        problems.push(format!(
                            "derived column '{}' references '{}' which is not a feature",
                            col.spec.name, from
                        ));
                    }
                }
                SynthRole::Feature { .. } => {}
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Base distribution parameters for a column, a pure function of its name.
struct BaseParams {
    /// Mean of the normalized numeric base distribution.
    numeric_mean: f64,
    /// Category weights (normalized) for categorical columns.
    cat_probs: Vec<f64>,
}

fn base_params(spec: &ColumnSpec) -> BaseParams {
    let h = fnv1a_64(spec.name.as_bytes());
    match &spec.kind {
        ColumnKind::Numeric { .. } => BaseParams {
            numeric_mean: 0.40 + 0.20 * ((h % 1024) as f64 / 1023.0),
            cat_probs: Vec::new(),
        },
        ColumnKind::Categorical { categories } => {
            let mut probs: Vec<f64> = (0..categories.len())
                .map(|i| 0.6 + 0.8 * (((h >> (7 * (i % 8))) & 0x7f) as f64 / 127.0))
                .collect();
            let total: f64 = probs.iter().sum();
            for p in &mut probs {
                *p /= total;
            }
            BaseParams {
                numeric_mean: 0.5,
                cat_probs: probs,
            }
        }
    }
}

const BASE_SD: f64 = 0.18;
const COND_SD: f64 = 0.12;
const COND_MEANS: [f64; 2] = [0.30, 0.70];
const CAT_SKEW: f64 = 1.4;

fn sample_trunc_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("valid normal");
    for _ in 0..64 {
        let v = normal.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    }
    mean.clamp(0.0, 1.0)
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `s`-conditional category weights: binary columns copy `s` exactly,
/// larger cardinalities get an exponential skew of the base weights.
fn conditional_cat_probs(base: &[f64], s: usize) -> Vec<f64> {
    if base.len() == 2 {
        let mut p = vec![0.0; 2];
        p[s] = 1.0;
        return p;
    }
    let k = (base.len() - 1) as f64;
    let sign = if s == 0 { -1.0 } else { 1.0 };
    let mut probs: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(i, &p)| p * (sign * CAT_SKEW * (i as f64 / k - 0.5)).exp())
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Mean of a column's normalized base value, used to center outcome scores.
fn base_center(spec: &ColumnSpec) -> f64 {
    let params = base_params(spec);
    match &spec.kind {
        ColumnKind::Numeric { .. } => params.numeric_mean,
        ColumnKind::Categorical { categories } => {
            let k = (categories.len() - 1) as f64;
            params
                .cat_probs
                .iter()
                .enumerate()
                .map(|(i, p)| p * i as f64 / k)
                .sum()
        }
    }
}

/// Normalized position of a value in its column, in [0, 1].
fn normalized_value(spec: &ColumnSpec, value: &Value) -> f64 {
    match (&spec.kind, value) {
        (ColumnKind::Numeric { min, max }, Value::Number(v)) => (v - min) / (max - min),
        (ColumnKind::Categorical { categories }, Value::Category(i)) => {
            *i as f64 / (categories.len() - 1) as f64
        }
        _ => unreachable!("value conforms to spec"),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generate a dataset from the spec. Deterministic given the seed.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let schema = spec.schema()?;
    let mut rng = component_rng(spec.seed, "tabular-synth");

    // Resolve plans once; per-row work only draws samples.
    let feature_plan: Vec<(usize, BaseParams, bool)> = spec
        .columns
        .iter()
        .enumerate()
        .filter_map(|(idx, col)| match col.role {
            SynthRole::Feature { biased } => Some((idx, base_params(&col.spec), biased)),
            _ => None,
        })
        .collect();
    let outcome_plan: Vec<(usize, f64, Vec<(usize, f64, f64)>)> = spec
        .columns
        .iter()
        .enumerate()
        .filter_map(|(idx, col)| match &col.role {
            SynthRole::Outcome { weights, sharpness } => {
                let resolved = weights
                    .iter()
                    .map(|(name, w)| {
                        let fi = spec
                            .columns
                            .iter()
                            .position(|c| c.spec.name == *name)
                            .expect("validated feature reference");
                        (fi, base_center(&spec.columns[fi].spec), *w)
                    })
                    .collect();
                Some((idx, *sharpness, resolved))
            }
            _ => None,
        })
        .collect();
    let derived_plan: Vec<(usize, usize, f64, BaseParams)> = spec
        .columns
        .iter()
        .enumerate()
        .filter_map(|(idx, col)| match &col.role {
            SynthRole::Derived { from, mix } => {
                let fi = spec
                    .columns
                    .iter()
                    .position(|c| c.spec.name == *from)
                    .expect("validated derived reference");
                Some((idx, fi, *mix, base_params(&col.spec)))
            }
            _ => None,
        })
        .collect();
    let protected_idx = spec
        .columns
        .iter()
        .position(|c| c.role == SynthRole::Protected)
        .expect("validated protected column");

    let n_cols = spec.columns.len();
    let mut rows = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let mut row: Vec<Option<Value>> = vec![None; n_cols];

        let s = usize::from(rng.random_bool(0.5));
        row[protected_idx] = Some(Value::Category(s));

        // Features, in schema order.
        for (idx, params, biased) in &feature_plan {
            let col_spec = &spec.columns[*idx].spec;
            let conditional = *biased && spec.bias_strength > 0.0 && {
                // At strength 1 this is always true but still consumes one
                // draw, keeping streams aligned across strengths.
                rng.random_bool(spec.bias_strength)
            };
            let value = match &col_spec.kind {
                ColumnKind::Numeric { min, max } => {
                    let norm = if conditional {
                        sample_trunc_normal(&mut rng, COND_MEANS[s], COND_SD)
                    } else {
                        sample_trunc_normal(&mut rng, params.numeric_mean, BASE_SD)
                    };
                    Value::Number(min + norm * (max - min))
                }
                ColumnKind::Categorical { .. } => {
                    let probs = if conditional {
                        conditional_cat_probs(&params.cat_probs, s)
                    } else {
                        params.cat_probs.clone()
                    };
                    Value::Category(sample_categorical(&mut rng, &probs))
                }
            };
            row[*idx] = Some(value);
        }

        // Derived columns, coupled to their source feature.
        for (idx, from_idx, mix, params) in &derived_plan {
            let col_spec = &spec.columns[*idx].spec;
            let from_spec = &spec.columns[*from_idx].spec;
            let source = row[*from_idx].as_ref().expect("features generated first");
            let copy = *mix > 0.0 && rng.random_bool(*mix);
            let value = match &col_spec.kind {
                ColumnKind::Numeric { min, max } => {
                    let norm = if copy {
                        normalized_value(from_spec, source)
                    } else {
                        sample_trunc_normal(&mut rng, params.numeric_mean, BASE_SD)
                    };
                    Value::Number(min + norm * (max - min))
                }
                ColumnKind::Categorical { categories } => {
                    if copy {
                        let i = source.as_category().unwrap_or(0).min(categories.len() - 1);
                        Value::Category(i)
                    } else {
                        Value::Category(sample_categorical(&mut rng, &params.cat_probs))
                    }
                }
            };
            row[*idx] = Some(value);
        }

        // Outcomes, from feature values only.
        for (idx, sharpness, resolved) in &outcome_plan {
            let mut score = 0.0;
            for (feat_idx, center, w) in resolved {
                let feat_spec = &spec.columns[*feat_idx].spec;
                let v = row[*feat_idx].as_ref().expect("features generated first");
                let centered = (normalized_value(feat_spec, v) - center) * 2.0;
                score += w * centered;
            }
            let p = sigmoid(sharpness * score);
            row[*idx] = Some(Value::Category(usize::from(rng.random_bool(p))));
        }

        rows.push(row.into_iter().map(|v| v.expect("all columns filled")).collect());
    }

    Dataset::new(schema, rows)
}
