//! The built-in synthetic dataset pair: a 15-column source and a 10-column
//! target sharing 10 columns, shaped like the datasets the pipeline is meant
//! for without requiring any real data. Both carry two label-capable binary
//! columns ("outcome", "flag"), one protected column ("grp"), and a planted
//! bias of configurable strength flowing through the designated columns
//! "num1" and "cat1".

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tabular::{synth_generate, ColumnSpec, Dataset, SynthColumn, SynthRole, SynthSpec};
use crate::util::sub_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSpec {
    pub n_rows: usize,
    pub bias_strength: f64,
    pub seed: u64,
}

impl Default for PairSpec {
    fn default() -> Self {
        PairSpec {
            n_rows: 20_000,
            bias_strength: 0.8,
            seed: 0,
        }
    }
}

/// Which of the two built-in shapes to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthPreset {
    /// 15 columns: the 10 shared plus 5 extras.
    Source,
    /// The 10 shared columns only.
    Target,
}

impl SynthPreset {
    pub fn id(&self) -> &'static str {
        match self {
            SynthPreset::Source => "source",
            SynthPreset::Target => "target",
        }
    }
}

fn shared_columns() -> Vec<SynthColumn> {
    vec![
        SynthColumn {
            spec: ColumnSpec::categorical("grp", &["g0", "g1"]),
            role: SynthRole::Protected,
        },
        SynthColumn {
            spec: ColumnSpec::categorical("outcome", &["neg", "pos"]),
            role: SynthRole::Outcome {
                weights: vec![
                    ("num1".into(), 0.9),
                    ("num3".into(), 1.6),
                    ("num4".into(), 1.3),
                    ("cat2".into(), 0.7),
                ],
                sharpness: 3.5,
            },
        },
        SynthColumn {
            spec: ColumnSpec::categorical("flag", &["lo", "hi"]),
            role: SynthRole::Outcome {
                weights: vec![
                    ("num2".into(), 0.8),
                    ("num4".into(), 1.5),
                    ("num5".into(), 1.2),
                    ("cat1".into(), 0.6),
                ],
                sharpness: 3.5,
            },
        },
        SynthColumn {
            spec: ColumnSpec::numeric("num1", 0.0, 1.0),
            role: SynthRole::Feature { biased: true },
        },
        SynthColumn {
            spec: ColumnSpec::numeric("num2", 0.0, 100.0),
            role: SynthRole::Feature { biased: false },
        },
        SynthColumn {
            spec: ColumnSpec::numeric("num3", -1.0, 1.0),
            role: SynthRole::Feature { biased: false },
        },
        SynthColumn {
            spec: ColumnSpec::numeric("num4", 0.0, 1.0),
            role: SynthRole::Feature { biased: false },
        },
        SynthColumn {
            spec: ColumnSpec::numeric("num5", 10.0, 90.0),
            role: SynthRole::Feature { biased: false },
        },
        SynthColumn {
            spec: ColumnSpec::categorical("cat1", &["a", "b", "c"]),
            role: SynthRole::Feature { biased: true },
        },
        SynthColumn {
            spec: ColumnSpec::categorical("cat2", &["p", "q", "r", "t"]),
            role: SynthRole::Feature { biased: false },
        },
    ]
}

fn extra_columns() -> Vec<SynthColumn> {
    // Noisy derivations of shared columns: realistic correlated extras that
    // keep the source's intrinsic dimension within the default latent size.
    vec![
        SynthColumn {
            spec: ColumnSpec::numeric("num6", 0.0, 1.0),
            role: SynthRole::Derived {
                from: "num3".into(),
                mix: 0.85,
            },
        },
        SynthColumn {
            spec: ColumnSpec::numeric("num7", 0.0, 5.0),
            role: SynthRole::Derived {
                from: "num4".into(),
                mix: 0.85,
            },
        },
        SynthColumn {
            spec: ColumnSpec::categorical("cat3", &["u", "v", "w"]),
            role: SynthRole::Derived {
                from: "cat1".into(),
                mix: 0.8,
            },
        },
        SynthColumn {
            spec: ColumnSpec::numeric("num8", 0.0, 1.0),
            role: SynthRole::Derived {
                from: "num5".into(),
                mix: 0.85,
            },
        },
        SynthColumn {
            spec: ColumnSpec::categorical("cat4", &["k1", "k2", "k3", "k4", "k5"]),
            role: SynthRole::Derived {
                from: "cat2".into(),
                mix: 0.8,
            },
        },
    ]
}

/// The generation spec for one preset, with "outcome" as the default label.
pub fn preset_spec(preset: SynthPreset, pair: &PairSpec) -> SynthSpec {
    let mut columns = shared_columns();
    if preset == SynthPreset::Source {
        columns.extend(extra_columns());
    }
    SynthSpec {
        columns,
        label_column: "outcome".into(),
        n_rows: pair.n_rows,
        bias_strength: pair.bias_strength,
        seed: sub_seed(pair.seed, preset.id()),
    }
}

/// Generate the (source, target) dataset pair. The target's columns are a
/// strict subset of the source's, so alignment works in both directions.
pub fn make_synth_pair(pair: &PairSpec) -> Result<(Dataset, Dataset)> {
    let source = synth_generate(&preset_spec(SynthPreset::Source, pair))?;
    let target = synth_generate(&preset_spec(SynthPreset::Target, pair))?;
    Ok((source, target))
}
