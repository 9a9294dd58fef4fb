//! Quantitative evaluation: per-column histograms, total-variation realism
//! checks, protected-attribute probes, and report assembly.
//!
//! The realism verdict turns a visual histogram comparison into a number:
//! pass iff every compared column's TV distance stays at or below the
//! threshold (0.15 by default, always recorded in the report).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::fit_binary_mlp;
use crate::diffnet::Matrix;
use crate::error::{Error, Result};
use crate::tabular::{argmax_lowest, ColumnKind, Dataset, EncodingLayout, Schema, Value};
use crate::util::component_rng;

pub const REPORT_FORMAT: &str = "fairprog.report.v1";
pub const DEFAULT_NUMERIC_BINS: usize = 20;
pub const DEFAULT_TV_THRESHOLD: f64 = 0.15;

/// Binning of one column's histogram. Numeric bins cover the normalized
/// [0, 1] range; categorical histograms get one bin per category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramBins {
    Numeric { bins: usize },
    Categorical { cardinality: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnHistogram {
    pub column: String,
    pub bins: HistogramBins,
    /// Normalized frequencies, summing to 1.
    pub frequencies: Vec<f64>,
}

fn histogram_from_bins(column: &str, bins: HistogramBins, hits: Vec<usize>, n: usize) -> ColumnHistogram {
    let frequencies = hits.iter().map(|&h| h as f64 / n as f64).collect();
    ColumnHistogram {
        column: column.to_string(),
        bins,
        frequencies,
    }
}

/// Histogram of a dataset column. Numeric values are min-max normalized
/// before binning so histograms from different sources share an axis.
pub fn histogram(data: &Dataset, column: &str, numeric_bins: usize) -> Result<ColumnHistogram> {
    if data.is_empty() {
        return Err(Error::Schema("histogram of an empty dataset".into()));
    }
    let spec = data
        .schema()
        .column(column)
        .ok_or_else(|| Error::Schema(format!("no column '{column}'")))?;
    match &spec.kind {
        ColumnKind::Categorical { categories } => {
            let mut hits = vec![0usize; categories.len()];
            for i in 0..data.len() {
                if let Some(Value::Category(c)) = data.value(i, column) {
                    hits[c] += 1;
                }
            }
            Ok(histogram_from_bins(
                column,
                HistogramBins::Categorical {
                    cardinality: categories.len(),
                },
                hits,
                data.len(),
            ))
        }
        ColumnKind::Numeric { min, max } => {
            let mut hits = vec![0usize; numeric_bins];
            for i in 0..data.len() {
                if let Some(Value::Number(v)) = data.value(i, column) {
                    let norm = ((v - min) / (max - min)).clamp(0.0, 1.0);
                    let bin = ((norm * numeric_bins as f64) as usize).min(numeric_bins - 1);
                    hits[bin] += 1;
                }
            }
            Ok(histogram_from_bins(
                column,
                HistogramBins::Numeric { bins: numeric_bins },
                hits,
                data.len(),
            ))
        }
    }
}

/// Histogram of one feature column in an encoded (or generated) batch laid
/// out per `layout`. Soft one-hot groups bin by argmax; numeric slots clamp
/// to [0, 1].
pub fn histogram_encoded(
    batch: &Matrix,
    layout: &EncodingLayout,
    schema: &Schema,
    column: &str,
    numeric_bins: usize,
) -> Result<ColumnHistogram> {
    if batch.rows() == 0 {
        return Err(Error::Schema("histogram of an empty batch".into()));
    }
    let spec = schema
        .column(column)
        .ok_or_else(|| Error::Schema(format!("no column '{column}'")))?;
    let range = layout
        .group(column)
        .ok_or_else(|| Error::Schema(format!("column '{column}' is not a feature")))?;
    match &spec.kind {
        ColumnKind::Categorical { categories } => {
            let mut hits = vec![0usize; categories.len()];
            for i in 0..batch.rows() {
                hits[argmax_lowest(&batch.row(i)[range.clone()])] += 1;
            }
            Ok(histogram_from_bins(
                column,
                HistogramBins::Categorical {
                    cardinality: categories.len(),
                },
                hits,
                batch.rows(),
            ))
        }
        ColumnKind::Numeric { .. } => {
            let mut hits = vec![0usize; numeric_bins];
            for i in 0..batch.rows() {
                let norm = batch.row(i)[range.start].clamp(0.0, 1.0);
                let bin = ((norm * numeric_bins as f64) as usize).min(numeric_bins - 1);
                hits[bin] += 1;
            }
            Ok(histogram_from_bins(
                column,
                HistogramBins::Numeric { bins: numeric_bins },
                hits,
                batch.rows(),
            ))
        }
    }
}

/// Total-variation distance between two histograms over identical binning:
/// half the L1 distance of the frequency vectors. 0 = identical, 1 = disjoint.
pub fn tv_distance(a: &ColumnHistogram, b: &ColumnHistogram) -> Result<f64> {
    if a.bins != b.bins {
        return Err(Error::Schema(format!(
            "histogram binning mismatch for '{}' vs '{}'",
            a.column, b.column
        )));
    }
    Ok(a.frequencies
        .iter()
        .zip(&b.frequencies)
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
        / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTv {
    pub column: String,
    pub tv: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismReport {
    pub threshold: f64,
    pub columns: Vec<ColumnTv>,
    pub pass: bool,
}

/// Compare real rows against a generated batch on the named columns.
///
/// The generated batch must be laid out per the generated schema's `(X, S)`
/// encoding; the named columns must be features of both sides with equal
/// kinds (which alignment guarantees for shared columns).
pub fn realism_check(
    real: &Dataset,
    generated: &Matrix,
    generated_schema: &Schema,
    columns: &[String],
    threshold: f64,
    numeric_bins: usize,
) -> Result<RealismReport> {
    if columns.is_empty() {
        return Err(Error::Schema("realism check needs at least one column".into()));
    }
    let layout = EncodingLayout::of(generated_schema);
    let mut column_reports = Vec::with_capacity(columns.len());
    let mut pass = true;
    for column in columns {
        let real_hist = histogram(real, column, numeric_bins)?;
        let gen_hist = histogram_encoded(generated, &layout, generated_schema, column, numeric_bins)?;
        let tv = tv_distance(&real_hist, &gen_hist)?;
        let column_pass = tv <= threshold;
        pass &= column_pass;
        column_reports.push(ColumnTv {
            column: column.clone(),
            tv,
            pass: column_pass,
        });
    }
    Ok(RealismReport {
        threshold,
        columns: column_reports,
        pass,
    })
}

/// Architecture/budget of a fairness probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    pub train_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        // Mirrors the base classifier's default architecture, retrained from
        // scratch for every evaluation.
        ProbeConfig {
            hidden: crate::diffnet::DEFAULT_HIDDEN.to_vec(),
            max_epochs: 40,
            patience: 5,
            train_fraction: 0.7,
        }
    }
}

/// Train a fresh classifier to predict the protected bit from `features`;
/// return its held-out accuracy. 0.5 means the protected attribute is not
/// recoverable.
pub fn probe_fairness(features: &Matrix, protected: &[usize], seed: u64) -> Result<f64> {
    probe_fairness_with(features, protected, seed, &ProbeConfig::default())
}

pub fn probe_fairness_with(
    features: &Matrix,
    protected: &[usize],
    seed: u64,
    config: &ProbeConfig,
) -> Result<f64> {
    if features.rows() != protected.len() {
        return Err(Error::shape(
            features.rows().to_string(),
            protected.len().to_string(),
            "probe label count",
        ));
    }
    let ones = protected.iter().filter(|&&s| s == 1).count();
    if ones == 0 || ones == protected.len() {
        return Err(Error::Schema(
            "probe needs both protected classes present".into(),
        ));
    }
    let n = protected.len();
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut component_rng(seed, "probe-split"));
    let n_train = ((n as f64) * config.train_fraction).round() as usize;
    let n_train = n_train.clamp(1, n - 1);
    let (train_idx, val_idx) = order.split_at(n_train);

    let pick_labels = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| protected[i]).collect() };
    let fit = fit_binary_mlp(
        &features.select_rows(train_idx),
        &pick_labels(train_idx),
        &features.select_rows(val_idx),
        &pick_labels(val_idx),
        &config.hidden,
        config.max_epochs,
        128,
        config.patience,
        1e-3,
        seed,
        "probe",
    )?;
    Ok(fit.val_accuracy)
}

/// One scenario's results: the cells behind one column of the results grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: String,
    /// Scenario id, e.g. "sdst".
    pub scenario: String,
    /// Reprogramming mode id, e.g. "gan".
    pub mode: String,
    pub gamma: f64,
    pub delta: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Frozen-classifier accuracy on generated rows vs target labels.
    pub accuracy: f64,
    /// Accuracy of a classifier trained directly on the target data.
    pub baseline_accuracy: f64,
    pub column_tv: Vec<ColumnTv>,
    pub realism_threshold: f64,
    pub realism_pass: bool,
    /// Fresh-probe accuracy on generated rows; 0.5 is perfectly fair.
    pub fairness_probe_accuracy: f64,
    /// Epoch whose checkpoint was selected for this report.
    pub selected_epoch: usize,
    /// Runtime is informational only and deliberately excluded from the
    /// serialized report so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MetricsReport> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

const SCENARIO_ORDER: [&str; 4] = ["sdst", "sddt", "ddst", "dddt"];

fn scenario_rank(id: &str) -> usize {
    SCENARIO_ORDER
        .iter()
        .position(|s| *s == id)
        .unwrap_or(SCENARIO_ORDER.len())
}

/// Render reports as a plaintext grid: one row per (mode, gamma, delta),
/// one column per scenario, check/cross marks for the realism verdict, and a
/// closing baseline row. Deterministic bytes for identical input.
pub fn render_grid(reports: &[MetricsReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Schema("no reports to render".into()));
    }
    let mut scenarios: Vec<String> = Vec::new();
    for r in reports {
        if !scenarios.contains(&r.scenario) {
            scenarios.push(r.scenario.clone());
        }
    }
    scenarios.sort_by(|a, b| scenario_rank(a).cmp(&scenario_rank(b)).then(a.cmp(b)));

    let mut row_keys: Vec<(String, String)> = Vec::new();
    for r in reports {
        let key = (r.mode.clone(), row_label(r));
        if !row_keys.iter().any(|k| k.1 == key.1) {
            row_keys.push(key);
        }
    }
    row_keys.sort_by(|a, b| mode_rank(&a.0).cmp(&mode_rank(&b.0)).then(a.1.cmp(&b.1)));

    let width = 16usize;
    let label_width = row_keys
        .iter()
        .map(|k| k.1.len())
        .chain(["baseline".len()])
        .max()
        .unwrap()
        + 2;

    let mut out = String::new();
    out.push_str(&format!("{:<label_width$}", ""));
    for s in &scenarios {
        out.push_str(&format!("{:<width$}", s.to_uppercase()));
    }
    out.push('\n');

    for (_, label) in &row_keys {
        out.push_str(&format!("{label:<label_width$}"));
        for s in &scenarios {
            let cell = reports
                .iter()
                .find(|r| &r.scenario == s && &row_label(r) == label)
                .map(|r| {
                    let mark = if r.mode == "classify_only" {
                        ""
                    } else if r.realism_pass {
                        " \u{2713}"
                    } else {
                        " \u{2717}"
                    };
                    let probe = if r.mode == "fairgan" {
                        format!(" p={:.2}", r.fairness_probe_accuracy)
                    } else {
                        String::new()
                    };
                    format!("{:.1}{mark}{probe}", r.accuracy * 100.0)
                })
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!("{cell:<width$}"));
        }
        out.push('\n');
    }

    out.push_str(&format!("{:<label_width$}", "baseline"));
    for s in &scenarios {
        let cell = reports
            .iter()
            .find(|r| &r.scenario == s)
            .map(|r| format!("{:.1}", r.baseline_accuracy * 100.0))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!("{cell:<width$}"));
    }
    out.push('\n');
    Ok(out)
}

fn mode_rank(mode: &str) -> usize {
    match mode {
        "classify_only" => 0,
        "gan" => 1,
        "fairgan" => 2,
        _ => 3,
    }
}

fn row_label(r: &MetricsReport) -> String {
    match r.mode.as_str() {
        "classify_only" => "classify_only".to_string(),
        "gan" => format!("gan g={}", r.gamma),
        _ => format!("{} g={} d={}", r.mode, r.gamma, r.delta),
    }
}

/// Write the combined JSON array and the plaintext grid.
pub fn emit_report(reports: &[MetricsReport], json_path: &Path, grid_path: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Schema("no reports to emit".into()));
    }
    let json = serde_json::to_string_pretty(reports)? + "\n";
    std::fs::write(json_path, json)?;
    std::fs::write(grid_path, render_grid(reports)?)?;
    Ok(())
}

/// Dump histograms as CSV (`column,bin,frequency`) for external plotting.
pub fn write_histogram_csv(histograms: &[ColumnHistogram], path: &Path) -> Result<()> {
    let mut out = String::from("column,bin,frequency\n");
    for h in histograms {
        for (i, f) in h.frequencies.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", h.column, i, f));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
