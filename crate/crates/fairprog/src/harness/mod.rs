//! Experiment orchestration: the four transfer scenarios, hyperparameter
//! sweeps, baseline tables, dataset plumbing, and the command-line
//! interface.

mod cli;
mod runner;
mod synth;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reprogram::ReprogramConfig;
use crate::tabular::{load_csv, Dataset, Schema};

pub use cli::cli;
pub use runner::{
    make_baselines, run_scenario, run_sweep, ArtifactSource, BaselineEntry, ScenarioOutput,
    SweepOutput,
};
pub use synth::{make_synth_pair, preset_spec, PairSpec, SynthPreset};

/// The four transfer scenarios: same/different dataset x same/different task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Sdst,
    Sddt,
    Ddst,
    Dddt,
}

impl ScenarioKind {
    pub fn id(&self) -> &'static str {
        match self {
            ScenarioKind::Sdst => "sdst",
            ScenarioKind::Sddt => "sddt",
            ScenarioKind::Ddst => "ddst",
            ScenarioKind::Dddt => "dddt",
        }
    }

    pub fn all() -> [ScenarioKind; 4] {
        [
            ScenarioKind::Sdst,
            ScenarioKind::Sddt,
            ScenarioKind::Ddst,
            ScenarioKind::Dddt,
        ]
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A CSV file validated against a JSON schema descriptor.
    Csv { path: PathBuf, schema: PathBuf },
    /// One of the built-in synthetic shapes.
    Synth {
        preset: SynthPreset,
        n_rows: usize,
        bias_strength: f64,
        seed: u64,
    },
}

/// A dataset plus the label designation to use on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRef {
    #[serde(flatten)]
    pub source: DataSource,
    pub label: String,
}

impl DataRef {
    /// Load or generate the dataset with the requested label designation.
    pub fn materialize(&self) -> Result<Dataset> {
        let data = match &self.source {
            DataSource::Csv { path, schema } => {
                let schema = Schema::from_json_file(schema)?;
                let (data, report) = load_csv(path, &schema, false)?;
                if !report.rejected.is_empty() {
                    eprintln!(
                        "note: {} of {} rows rejected while loading {}",
                        report.rejected.len(),
                        report.rows_read,
                        path.display()
                    );
                }
                data
            }
            DataSource::Synth {
                preset,
                n_rows,
                bias_strength,
                seed,
            } => {
                let pair = PairSpec {
                    n_rows: *n_rows,
                    bias_strength: *bias_strength,
                    seed: *seed,
                };
                crate::tabular::synth_generate(&preset_spec(*preset, &pair))?
            }
        };
        data.with_label(&self.label)
    }

    /// Short id used in tables.
    pub fn id(&self) -> String {
        let data = match &self.source {
            DataSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
            DataSource::Synth { preset, .. } => format!("synth-{}", preset.id()),
        };
        format!("{data}:{}", self.label)
    }
}

/// One transfer experiment: base artifacts from `source`, reprogramming onto
/// `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub source: DataRef,
    pub target: DataRef,
    pub reprogram: ReprogramConfig,
    pub seed: u64,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
}

fn default_split() -> (f64, f64, f64) {
    (0.7, 0.15, 0.15)
}

impl ScenarioSpec {
    /// Check the kind's dataset/task identity constraints and the
    /// reprogramming config, before any training starts.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let same_data = self.source.source == self.target.source;
        let same_label = self.source.label == self.target.label;
        let want = match self.kind {
            ScenarioKind::Sdst => (true, true),
            ScenarioKind::Sddt => (true, false),
            ScenarioKind::Ddst => (false, true),
            ScenarioKind::Dddt => (false, false),
        };
        if same_data != want.0 {
            problems.push(format!(
                "kind {}: source and target datasets must {}match",
                self.kind.id(),
                if want.0 { "" } else { "not " }
            ));
        }
        if same_label != want.1 {
            problems.push(format!(
                "kind {}: labels must {}match",
                self.kind.id(),
                if want.1 { "" } else { "not " }
            ));
        }
        if let Err(Error::Config(more)) = self.reprogram.validate() {
            problems.extend(more);
        }
        let (a, b, c) = self.split;
        if !(a > 0.0 && b > 0.0 && c > 0.0 && (a + b + c - 1.0).abs() < 1e-9) {
            problems.push(format!(
                "split fractions must be positive and sum to 1, got ({a}, {b}, {c})"
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// A hyperparameter grid over the reprogramming knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default = "one_point")]
    pub gammas: Vec<f64>,
    #[serde(default = "zero_point")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_lrs")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn one_point() -> Vec<f64> {
    vec![0.5]
}

fn zero_point() -> Vec<f64> {
    vec![0.0]
}

fn default_lrs() -> Vec<f64> {
    vec![1e-3]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.gammas.is_empty()
            || self.deltas.is_empty()
            || self.learning_rates.is_empty()
            || self.seeds.is_empty()
        {
            problems.push("sweep grid axes must be nonempty".to_string());
        }
        if self.gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            problems.push("gammas must be finite and nonnegative".to_string());
        }
        if self.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            problems.push("deltas must be finite and nonnegative".to_string());
        }
        if self
            .learning_rates
            .iter()
            .any(|lr| !(lr.is_finite() && *lr > 0.0))
        {
            problems.push("learning_rates must be finite and positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// All grid points in a fixed order.
    pub fn points(&self) -> Vec<(f64, f64, f64, u64)> {
        let mut points = Vec::new();
        for &gamma in &self.gammas {
            for &delta in &self.deltas {
                for &lr in &self.learning_rates {
                    for &seed in &self.seeds {
                        points.push((gamma, delta, lr, seed));
                    }
                }
            }
        }
        points
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reprogram::ReprogramMode;

    fn synth_ref(preset: SynthPreset, label: &str) -> DataRef {
        DataRef {
            source: DataSource::Synth {
                preset,
                n_rows: 100,
                bias_strength: 0.5,
                seed: 1,
            },
            label: label.into(),
        }
    }

    #[test]
    fn kind_constraints_are_enforced() {
        let mut spec = ScenarioSpec {
            kind: ScenarioKind::Sdst,
            source: synth_ref(SynthPreset::Source, "outcome"),
            target: synth_ref(SynthPreset::Source, "outcome"),
            reprogram: ReprogramConfig::default(),
            seed: 1,
            split: (0.7, 0.15, 0.15),
        };
        assert!(spec.validate().is_ok());

        spec.kind = ScenarioKind::Sddt;
        assert!(spec.validate().is_err());
        spec.target.label = "flag".into();
        assert!(spec.validate().is_ok());

        spec.kind = ScenarioKind::Dddt;
        spec.target = synth_ref(SynthPreset::Target, "flag");
        assert!(spec.validate().is_ok());

        spec.kind = ScenarioKind::Ddst;
        assert!(spec.validate().is_err());
        spec.target.label = "outcome".into();
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn validation_lists_every_offending_field() {
        let mut spec = ScenarioSpec {
            kind: ScenarioKind::Sdst,
            source: synth_ref(SynthPreset::Source, "outcome"),
            target: synth_ref(SynthPreset::Source, "outcome"),
            reprogram: ReprogramConfig {
                mode: ReprogramMode::FairGan,
                gamma: -1.0,
                delta: f64::NAN,
                ..ReprogramConfig::default()
            },
            seed: 1,
            split: (0.7, 0.2, 0.2),
        };
        spec.target.label = "flag".into();
        let err = spec.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma"), "{msg}");
        assert!(msg.contains("delta"), "{msg}");
        assert!(msg.contains("labels must match"), "{msg}");
        assert!(msg.contains("split fractions"), "{msg}");
    }

    #[test]
    fn sweep_points_cover_the_grid() {
        let sweep = SweepSpec {
            gammas: vec![0.5, 100.0],
            deltas: vec![0.0, 1.0],
            learning_rates: vec![1e-3],
            seeds: vec![1, 2],
        };
        assert!(sweep.validate().is_ok());
        assert_eq!(sweep.points().len(), 8);
    }

    #[test]
    fn materialize_applies_label() {
        let data = synth_ref(SynthPreset::Target, "flag").materialize().unwrap();
        assert_eq!(data.schema().label_column, "flag");
    }
}
