//! The base classifier: trained once on the source dataset, then frozen.
//! Reprogramming losses and evaluation both call into it; its parameters
//! never change after training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffnet::{
    adam_step, backward, cross_entropy, forward, Activation, AdamHyper, Matrix, MlpConfig,
    MlpParams, OptimizerState, OutputActivation, DEFAULT_HIDDEN,
};
use crate::error::{Error, Result};
use crate::tabular::{argmax_lowest, encode, Dataset, EncodedMatrix};
use crate::util::component_rng;

pub const CLASSIFIER_FORMAT: &str = "fairprog.classifier.v1";

/// Training knobs. Defaults: 2x64 relu hidden stack, batch 128, at most 200
/// epochs with early stopping after 10 stale validation checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Whether the protected column is part of the input. Off by default so
    /// the classifier cannot commit disparate treatment; flip for ablations.
    pub include_protected: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            max_epochs: 200,
            batch_size: 128,
            patience: 10,
            learning_rate: 1e-3,
            include_protected: false,
        }
    }
}

/// A frozen classifier. Parameters are private and immutable; the
/// fingerprint lets callers verify they stayed that way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classifier {
    format: String,
    config: MlpConfig,
    params: MlpParams,
    schema_fingerprint: String,
    label_column: String,
    includes_protected: bool,
    val_accuracy: f64,
}

impl Classifier {
    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn input_width(&self) -> usize {
        self.config.input_width()
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn includes_protected(&self) -> bool {
        self.includes_protected
    }

    pub fn val_accuracy(&self) -> f64 {
        self.val_accuracy
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    pub fn params_fingerprint(&self) -> String {
        self.params.fingerprint()
    }

    /// Forward pass access for losses that differentiate through the frozen
    /// classifier. Gradients may flow to the *input*, never to the params.
    pub(crate) fn forward_trace(&self, inputs: &Matrix) -> Result<crate::diffnet::ForwardTrace> {
        forward(&self.config, &self.params, inputs)
    }

    pub(crate) fn raw_params(&self) -> &MlpParams {
        &self.params
    }

    /// The encoded slice this classifier consumes from a dataset.
    pub fn inputs_from(&self, encoded: &EncodedMatrix) -> Matrix {
        if self.includes_protected {
            encoded.generator_inputs()
        } else {
            encoded.features()
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Classifier> {
        let text = std::fs::read_to_string(path)?;
        let c: Classifier = serde_json::from_str(&text)?;
        if c.format != CLASSIFIER_FORMAT {
            return Err(Error::Config(vec![format!(
                "unsupported checkpoint format '{}', expected '{}'",
                c.format, CLASSIFIER_FORMAT
            )]));
        }
        Ok(c)
    }
}

/// Class probabilities for a batch, rows summing to 1.
pub fn predict(classifier: &Classifier, inputs: &Matrix) -> Result<Matrix> {
    let trace = classifier.forward_trace(inputs)?;
    Ok(trace.output().clone())
}

/// Argmax per row; ties resolve to class 0.
pub fn hard_labels(probabilities: &Matrix) -> Vec<usize> {
    (0..probabilities.rows())
        .map(|i| argmax_lowest(probabilities.row(i)))
        .collect()
}

/// Fraction of rows whose hard label matches.
pub fn accuracy(classifier: &Classifier, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Schema("accuracy of an empty dataset".into()));
    }
    if data.schema().fingerprint() != classifier.schema_fingerprint {
        return Err(Error::Schema(
            "dataset schema does not match the classifier's training schema".into(),
        ));
    }
    let encoded = encode(data);
    let inputs = classifier.inputs_from(&encoded);
    accuracy_on_matrix(classifier, &inputs, &encoded.labels())
}

/// Accuracy on a pre-encoded input matrix (e.g. generated rows).
pub fn accuracy_on_matrix(
    classifier: &Classifier,
    inputs: &Matrix,
    labels: &[usize],
) -> Result<f64> {
    let probs = predict(classifier, inputs)?;
    let hard = hard_labels(&probs);
    let correct = hard.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Train and freeze a classifier on the source dataset.
///
/// Early-stops when validation accuracy has not improved for
/// `config.patience` epochs and keeps the best-epoch parameters.
pub fn train_classifier(
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<Classifier> {
    if train.schema() != val.schema() {
        return Err(Error::Schema(
            "train and validation sets must share a schema".into(),
        ));
    }
    let schema = train.schema();
    let train_enc = encode(train);
    let val_enc = encode(val);

    let pick = |enc: &EncodedMatrix| {
        if config.include_protected {
            enc.generator_inputs()
        } else {
            enc.features()
        }
    };
    let fit = fit_binary_mlp(
        &pick(&train_enc),
        &train_enc.labels(),
        &pick(&val_enc),
        &val_enc.labels(),
        &config.hidden,
        config.max_epochs,
        config.batch_size,
        config.patience,
        config.learning_rate,
        seed,
        "classifier",
    )?;

    Ok(Classifier {
        format: CLASSIFIER_FORMAT.to_string(),
        config: fit.config,
        params: fit.params,
        schema_fingerprint: schema.fingerprint(),
        label_column: schema.label_column.clone(),
        includes_protected: config.include_protected,
        val_accuracy: fit.val_accuracy,
    })
}

pub(crate) struct FitResult {
    pub config: MlpConfig,
    pub params: MlpParams,
    pub val_accuracy: f64,
}

/// Shared binary-classification training loop over raw matrices; the
/// fairness probes reuse it so probe and classifier training match.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_binary_mlp(
    inputs: &Matrix,
    labels: &[usize],
    val_inputs: &Matrix,
    val_labels: &[usize],
    hidden: &[usize],
    max_epochs: usize,
    batch_size: usize,
    patience: usize,
    learning_rate: f64,
    seed: u64,
    tag: &str,
) -> Result<FitResult> {
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Schema("labels must be binary".into()));
    }
    let mut widths = vec![inputs.cols()];
    widths.extend_from_slice(hidden);
    widths.push(2);
    let config = MlpConfig::new(
        widths,
        Activation::Relu,
        OutputActivation::SoftmaxGroups(vec![0..2]),
    )?;

    let mut rng = component_rng(seed, tag);
    let mut params = MlpParams::init(&config, &mut rng);
    let mut state = OptimizerState::new(&config, AdamHyper::with_learning_rate(learning_rate));

    let n = inputs.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best_params = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut stale = 0usize;

    for _epoch in 0..max_epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(batch_size) {
            let batch = inputs.select_rows(chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let trace = forward(&config, &params, &batch)?;
            let ce = cross_entropy(trace.output(), &batch_labels)?;
            if !ce.loss.is_finite() {
                return Err(Error::Diverged(format!("{tag}: loss became non-finite")));
            }
            let (grads, _) = backward(&config, &params, &trace, &ce.grad)?;
            adam_step(&mut params, &grads, &mut state)?;
        }
        let val_trace = forward(&config, &params, val_inputs)?;
        let hard = hard_labels(val_trace.output());
        let correct = hard.iter().zip(val_labels).filter(|(a, b)| a == b).count();
        let acc = correct as f64 / val_labels.len() as f64;
        if acc > best_acc + 1e-12 {
            best_acc = acc;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                break;
            }
        }
    }

    Ok(FitResult {
        config,
        params: best_params,
        val_accuracy: best_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{ColumnSpec, Schema, Value};
    use rand::Rng;

    fn separable_dataset(n: usize, seed: u64) -> Dataset {
        // Label is 1 exactly when x1 + x2 > 1, with a margin around the
        // boundary so a small net can reach ~1.0 accuracy.
        let schema = Schema::new(
            vec![
                ColumnSpec::numeric("x1", 0.0, 1.0),
                ColumnSpec::numeric("x2", 0.0, 1.0),
                ColumnSpec::categorical("y", &["no", "yes"]),
                ColumnSpec::categorical("s", &["g0", "g1"]),
            ],
            "y",
            "s",
        )
        .unwrap();
        let mut rng = component_rng(seed, "separable");
        let mut rows = Vec::new();
        while rows.len() < n {
            let x1: f64 = rng.random();
            let x2: f64 = rng.random();
            let margin = x1 + x2 - 1.0;
            if margin.abs() < 0.08 {
                continue;
            }
            rows.push(vec![
                Value::Number(x1),
                Value::Number(x2),
                Value::Category(usize::from(margin > 0.0)),
                Value::Category(usize::from(rng.random_bool(0.5))),
            ]);
        }
        Dataset::new(schema, rows).unwrap()
    }

    #[test]
    fn separable_data_reaches_high_accuracy() {
        let data = separable_dataset(3000, 1);
        let (train, val, test) = data.split((0.7, 0.15, 0.15), 2).unwrap();
        let config = TrainConfig {
            max_epochs: 60,
            ..TrainConfig::default()
        };
        let c = train_classifier(&train, &val, &config, 3).unwrap();
        assert!(c.val_accuracy() >= 0.98, "val acc {}", c.val_accuracy());
        let test_acc = accuracy(&c, &test).unwrap();
        assert!(test_acc >= 0.97, "test acc {test_acc}");
    }

    #[test]
    fn constant_label_data_is_learned_exactly() {
        let schema = Schema::new(
            vec![
                ColumnSpec::numeric("x", 0.0, 1.0),
                ColumnSpec::categorical("y", &["no", "yes"]),
                ColumnSpec::categorical("s", &["g0", "g1"]),
            ],
            "y",
            "s",
        )
        .unwrap();
        let rows: Vec<Vec<Value>> = (0..200)
            .map(|i| {
                vec![
                    Value::Number(i as f64 / 200.0),
                    Value::Category(0),
                    Value::Category(i % 2),
                ]
            })
            .collect();
        let data = Dataset::new(schema, rows).unwrap();
        let (train, val, _) = data.split((0.6, 0.2, 0.2), 1).unwrap();
        let config = TrainConfig {
            max_epochs: 10,
            ..TrainConfig::default()
        };
        let c = train_classifier(&train, &val, &config, 1).unwrap();
        assert_eq!(accuracy(&c, &data).unwrap(), 1.0);
    }

    #[test]
    fn zero_logits_tie_breaks_to_class_zero() {
        let probs = Matrix::from_rows(&[vec![0.5, 0.5]]);
        assert_eq!(hard_labels(&probs), vec![0]);
    }

    #[test]
    fn prediction_is_deterministic() {
        let data = separable_dataset(400, 5);
        let (train, val, _) = data.split((0.7, 0.15, 0.15), 2).unwrap();
        let config = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let c = train_classifier(&train, &val, &config, 4).unwrap();
        let enc = encode(&val);
        let inputs = c.inputs_from(&enc);
        let a = predict(&c, &inputs).unwrap();
        let b = predict(&c, &inputs).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn accuracy_matches_brute_force_recount() {
        let data = separable_dataset(500, 7);
        let (train, val, test) = data.split((0.6, 0.2, 0.2), 3).unwrap();
        let config = TrainConfig {
            max_epochs: 8,
            ..TrainConfig::default()
        };
        let c = train_classifier(&train, &val, &config, 9).unwrap();

        let acc = accuracy(&c, &test).unwrap();
        let enc = encode(&test);
        let probs = predict(&c, &c.inputs_from(&enc)).unwrap();
        let labels = enc.labels();
        let mut correct = 0usize;
        for i in 0..probs.rows() {
            let hard = usize::from(probs.get(i, 1) > probs.get(i, 0));
            if hard == labels[i] {
                correct += 1;
            }
        }
        assert!((acc - correct as f64 / labels.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn coin_flip_labels_stay_near_half() {
        // Labels independent of features: no classifier beats chance.
        let schema = Schema::new(
            vec![
                ColumnSpec::numeric("x1", 0.0, 1.0),
                ColumnSpec::numeric("x2", 0.0, 1.0),
                ColumnSpec::categorical("y", &["no", "yes"]),
                ColumnSpec::categorical("s", &["g0", "g1"]),
            ],
            "y",
            "s",
        )
        .unwrap();
        let mut rng = component_rng(11, "coinflip");
        let rows: Vec<Vec<Value>> = (0..12000)
            .map(|_| {
                vec![
                    Value::Number(rng.random()),
                    Value::Number(rng.random()),
                    Value::Category(usize::from(rng.random_bool(0.5))),
                    Value::Category(usize::from(rng.random_bool(0.5))),
                ]
            })
            .collect();
        let data = Dataset::new(schema, rows).unwrap();
        let (train, val, test) = data.split((0.7, 0.15, 0.15), 1).unwrap();
        let config = TrainConfig {
            max_epochs: 6,
            patience: 3,
            ..TrainConfig::default()
        };
        let c = train_classifier(&train, &val, &config, 13).unwrap();
        let acc = accuracy(&c, &test).unwrap();
        assert!((acc - 0.5).abs() <= 0.02, "accuracy {acc} not near 0.5");
    }

    #[test]
    fn frozen_params_survive_save_load() {
        let data = separable_dataset(300, 2);
        let (train, val, _) = data.split((0.7, 0.15, 0.15), 2).unwrap();
        let config = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let c = train_classifier(&train, &val, &config, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("classifier.json");
        c.save(&path).unwrap();
        let loaded = Classifier::load(&path).unwrap();
        assert_eq!(c.params_fingerprint(), loaded.params_fingerprint());
        assert_eq!(c.schema_fingerprint(), loaded.schema_fingerprint());
    }

    #[test]
    fn rejects_mismatched_schema() {
        let data = separable_dataset(300, 3);
        let (train, val, _) = data.split((0.7, 0.15, 0.15), 2).unwrap();
        let config = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        };
        let c = train_classifier(&train, &val, &config, 5).unwrap();
        // Same columns, different numeric range: different fingerprint.
        let wider = Schema::new(
            vec![
                ColumnSpec::numeric("x1", 0.0, 2.0),
                ColumnSpec::numeric("x2", 0.0, 1.0),
                ColumnSpec::categorical("y", &["no", "yes"]),
                ColumnSpec::categorical("s", &["g0", "g1"]),
            ],
            "y",
            "s",
        )
        .unwrap();
        let source = separable_dataset(100, 4);
        let other = Dataset::new(wider, source.rows().to_vec()).unwrap();
        assert!(accuracy(&c, &other).is_err());
    }
}

