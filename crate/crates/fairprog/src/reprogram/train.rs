//! The alternating reprogramming loop and checkpoint selection.

use std::time::Instant;

use crate::classifier::{accuracy_on_matrix, hard_labels, predict, Classifier};
use crate::diffnet::{
    adam_step, backward, bce, forward, AdamHyper, Matrix, MlpParams, OptimizerState,
};
use crate::error::{Error, Result};
use crate::metrics::{
    probe_fairness, probe_fairness_with, realism_check, MetricsReport, ProbeConfig, RealismReport,
    REPORT_FORMAT,
};
use crate::tabular::{decode_generated, encode, Dataset};
use crate::util::{component_rng, sub_seed};

use super::{
    combined_loss, generator_forward, Batch, Discriminator, Generator, ReprogramConfig,
    ReprogramMode,
};

/// Everything a finished run hands back.
#[derive(Debug)]
pub struct TrainedReprogram {
    pub generator: Generator,
    pub d1: Option<Discriminator>,
    pub d2: Option<Discriminator>,
    pub report: MetricsReport,
}

struct Snapshot {
    epoch: usize,
    params: MlpParams,
    accuracy: f64,
    realism_pass: bool,
    probe: f64,
}

fn classifier_inputs(c: &Classifier, generated: &Matrix, feature_width: usize) -> Matrix {
    if c.includes_protected() {
        generated.clone()
    } else {
        generated.gather_columns(&[0..feature_width])
    }
}

/// Train the generator (and discriminators, per mode) on the target data.
///
/// Per batch: the realism discriminator takes `disc_steps` updates on real
/// vs generated shared columns, the fairness discriminator one update on
/// generated columns labeled by the true protected bit, then the encoder one
/// update on the combined objective. The frozen classifier and decoder are
/// never touched.
///
/// Checkpoint choice: ClassifyOnly keeps the best validation accuracy
/// (early-stopping on plateau). The adversarial modes run to the epoch
/// budget and pick, among evaluated checkpoints, by mode: Gan maximizes
/// accuracy subject to the realism check passing; FairGan minimizes
/// |probe - 0.5| subject to realism passing and accuracy staying within
/// `accuracy_floor` of the baseline. Both fall back to the best available
/// checkpoint when no candidate satisfies the constraints.
pub fn train_reprogram(
    generator: Generator,
    classifier: &Classifier,
    train: &Dataset,
    val: &Dataset,
    config: &ReprogramConfig,
    scenario_id: &str,
    baseline_accuracy: f64,
) -> Result<TrainedReprogram> {
    config.validate()?;
    let started = Instant::now();
    let mut generator = generator;

    if train.schema() != val.schema() {
        return Err(Error::Schema(
            "train and validation sets must share a schema".into(),
        ));
    }
    if train.schema() != generator.target_schema() {
        return Err(Error::Schema(
            "data schema does not match the generator's target schema".into(),
        ));
    }
    if classifier.schema_fingerprint() != generator.base_schema().fingerprint() {
        return Err(Error::Schema(
            "classifier was not trained on the generator's base schema".into(),
        ));
    }

    let train_enc = encode(train);
    let val_enc = encode(val);
    let train_inputs = train_enc.generator_inputs();
    let val_inputs = val_enc.generator_inputs();
    let train_labels = train_enc.labels();
    let val_labels = val_enc.labels();
    let train_s: Vec<f64> = train_enc.protected_bits();

    let feature_width = generator.base_feature_width();

    // Separate streams per component: enabling one never perturbs another.
    let mut d1 = if config.realism_active() {
        if generator.d1_columns().is_empty() {
            return Err(Error::Schema(
                "no shared feature columns for the realism discriminator".into(),
            ));
        }
        Some(Discriminator::new(
            generator.d1_width(),
            &config.disc_hidden,
            &mut component_rng(config.seed, "reprogram-d1-init"),
        )?)
    } else {
        None
    };
    let mut d2 = if config.fairness_active() {
        Some(Discriminator::new(
            feature_width,
            &config.disc_hidden,
            &mut component_rng(config.seed, "reprogram-d2-init"),
        )?)
    } else {
        None
    };

    let hyper = AdamHyper::with_learning_rate(config.learning_rate);
    let mut enc_state = OptimizerState::new(generator.encoder_config(), hyper);
    let mut d1_state = d1.as_ref().map(|d| OptimizerState::new(&d.config, hyper));
    let mut d2_state = d2.as_ref().map(|d| OptimizerState::new(&d.config, hyper));

    let mut data_rng = component_rng(config.seed, "reprogram-data");
    let n = train_inputs.rows();
    let mut order: Vec<usize> = (0..n).collect();

    let base_ranges = generator.d1_ranges_base();
    let target_ranges = generator.d1_ranges_target();

    let classify_only = config.mode == ReprogramMode::ClassifyOnly;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_params = generator.encoder_params().clone();
    let mut best_epoch = 0usize;
    let mut stale = 0usize;
    let mut snapshots: Vec<Snapshot> = Vec::new();

    // Light probe for checkpoint comparison; the reported number comes from
    // a full fresh probe after selection.
    let light_probe = ProbeConfig {
        hidden: vec![16],
        max_epochs: 8,
        patience: 3,
        train_fraction: 0.7,
    };
    let probe_rows = val_inputs.rows().min(2000);

    for epoch in 0..config.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut data_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch_inputs = train_inputs.select_rows(chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();

            if d1.is_some() || d2.is_some() {
                let generated = generator_forward(&generator, &batch_inputs)?;

                if let (Some(d1), Some(state)) = (d1.as_mut(), d1_state.as_mut()) {
                    let real = batch_inputs.gather_columns(&target_ranges);
                    let fake = generated.gather_columns(&base_ranges);
                    let disc_batch = real.vcat(&fake);
                    let mut targets = vec![1.0; real.rows()];
                    targets.extend(vec![0.0; fake.rows()]);
                    for _ in 0..config.disc_steps {
                        let trace = forward(&d1.config, &d1.params, &disc_batch)?;
                        let loss = bce(trace.output(), &targets)?;
                        if !loss.loss.is_finite() {
                            return Err(Error::Diverged(format!(
                                "realism discriminator loss non-finite at epoch {epoch}"
                            )));
                        }
                        let (grads, _) = backward(&d1.config, &d1.params, &trace, &loss.grad)?;
                        adam_step(&mut d1.params, &grads, state)?;
                    }
                }

                if let (Some(d2), Some(state)) = (d2.as_mut(), d2_state.as_mut()) {
                    let gen_features = generated.gather_columns(&[0..feature_width]);
                    let targets: Vec<f64> = chunk.iter().map(|&i| train_s[i]).collect();
                    let trace = forward(&d2.config, &d2.params, &gen_features)?;
                    let loss = bce(trace.output(), &targets)?;
                    if !loss.loss.is_finite() {
                        return Err(Error::Diverged(format!(
                            "fairness discriminator loss non-finite at epoch {epoch}"
                        )));
                    }
                    let (grads, _) = backward(&d2.config, &d2.params, &trace, &loss.grad)?;
                    adam_step(&mut d2.params, &grads, state)?;
                }
            }

            let batch = Batch {
                inputs: &batch_inputs,
                labels: &batch_labels,
            };
            let loss = combined_loss(&generator, d1.as_ref(), d2.as_ref(), classifier, &batch, config)?;
            if !loss.breakdown.total.is_finite() {
                return Err(Error::Diverged(format!(
                    "generator loss non-finite at epoch {epoch}: {:?}",
                    loss.breakdown
                )));
            }
            adam_step(generator.encoder_params_mut(), &loss.encoder_grads, &mut enc_state)?;
        }

        if classify_only {
            let generated = generator_forward(&generator, &val_inputs)?;
            let inputs = classifier_inputs(classifier, &generated, feature_width);
            let acc = accuracy_on_matrix(classifier, &inputs, &val_labels)?;
            if acc > best_acc + 1e-12 {
                best_acc = acc;
                best_params = generator.encoder_params().clone();
                best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        } else if (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs {
            let generated = generator_forward(&generator, &val_inputs)?;
            let inputs = classifier_inputs(classifier, &generated, feature_width);
            let acc = accuracy_on_matrix(classifier, &inputs, &val_labels)?;
            let realism = realism_check(
                val,
                &generated,
                generator.base_schema(),
                generator.d1_columns(),
                config.tv_threshold,
                config.numeric_bins,
            )?;
            let probe = if config.fairness_active() {
                let features = generated
                    .select_rows(&(0..probe_rows).collect::<Vec<_>>())
                    .gather_columns(&[0..feature_width]);
                let s_bits: Vec<usize> = val_enc.protected_bits()[..probe_rows]
                    .iter()
                    .map(|&b| b as usize)
                    .collect();
                probe_fairness_with(
                    &features,
                    &s_bits,
                    sub_seed(config.seed, &format!("ckpt-probe-{epoch}")),
                    &light_probe,
                )?
            } else {
                f64::NAN
            };
            snapshots.push(Snapshot {
                epoch,
                params: generator.encoder_params().clone(),
                accuracy: acc,
                realism_pass: realism.pass,
                probe,
            });
        }
    }

    // Checkpoint selection.
    let selected_epoch = if classify_only {
        generator.set_encoder_params(best_params);
        best_epoch
    } else {
        let chosen = select_snapshot(&snapshots, config, baseline_accuracy)?;
        generator.set_encoder_params(snapshots[chosen].params.clone());
        snapshots[chosen].epoch
    };

    // Final evaluation of the selected checkpoint.
    let generated = generator_forward(&generator, &val_inputs)?;
    let inputs = classifier_inputs(classifier, &generated, feature_width);
    let accuracy = accuracy_on_matrix(classifier, &inputs, &val_labels)?;
    let realism: RealismReport = realism_check(
        val,
        &generated,
        generator.base_schema(),
        generator.d1_columns(),
        config.tv_threshold,
        config.numeric_bins,
    )?;
    let features = generated.gather_columns(&[0..feature_width]);
    let s_bits: Vec<usize> = val_enc.protected_bits().iter().map(|&b| b as usize).collect();
    let fairness_probe_accuracy =
        probe_fairness(&features, &s_bits, sub_seed(config.seed, "final-probe"))?;

    let report = MetricsReport {
        format: REPORT_FORMAT.to_string(),
        scenario: scenario_id.to_string(),
        mode: config.mode.id().to_string(),
        gamma: config.gamma,
        delta: config.effective_delta(),
        learning_rate: config.learning_rate,
        seed: config.seed,
        accuracy,
        baseline_accuracy,
        column_tv: realism.columns,
        realism_threshold: config.tv_threshold,
        realism_pass: realism.pass,
        fairness_probe_accuracy,
        selected_epoch,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };

    Ok(TrainedReprogram {
        generator,
        d1,
        d2,
        report,
    })
}

fn select_snapshot(
    snapshots: &[Snapshot],
    config: &ReprogramConfig,
    baseline_accuracy: f64,
) -> Result<usize> {
    if snapshots.is_empty() {
        return Err(Error::Schema("no checkpoints were evaluated".into()));
    }
    let best_by_accuracy = || {
        let mut best = 0;
        for (i, s) in snapshots.iter().enumerate() {
            if s.accuracy > snapshots[best].accuracy {
                best = i;
            }
        }
        best
    };
    match config.mode {
        ReprogramMode::ClassifyOnly => unreachable!("handled by the early-stopping path"),
        ReprogramMode::Gan => {
            let mut best: Option<usize> = None;
            for (i, s) in snapshots.iter().enumerate() {
                if s.realism_pass
                    && best.is_none_or(|b| s.accuracy > snapshots[b].accuracy)
                {
                    best = Some(i);
                }
            }
            Ok(best.unwrap_or_else(best_by_accuracy))
        }
        ReprogramMode::FairGan => {
            if !config.fairness_active() {
                // delta = 0: identical selection to Gan mode.
                let mut best: Option<usize> = None;
                for (i, s) in snapshots.iter().enumerate() {
                    if s.realism_pass
                        && best.is_none_or(|b| s.accuracy > snapshots[b].accuracy)
                    {
                        best = Some(i);
                    }
                }
                return Ok(best.unwrap_or_else(best_by_accuracy));
            }
            let floor = baseline_accuracy - config.accuracy_floor;
            let fairest = |candidates: &[usize]| -> Option<usize> {
                candidates.iter().copied().min_by(|&a, &b| {
                    let da = (snapshots[a].probe - 0.5).abs();
                    let db = (snapshots[b].probe - 0.5).abs();
                    da.partial_cmp(&db).unwrap()
                })
            };
            let strict: Vec<usize> = (0..snapshots.len())
                .filter(|&i| snapshots[i].realism_pass && snapshots[i].accuracy >= floor)
                .collect();
            if let Some(i) = fairest(&strict) {
                return Ok(i);
            }
            let relaxed: Vec<usize> = (0..snapshots.len())
                .filter(|&i| snapshots[i].realism_pass)
                .collect();
            if let Some(i) = fairest(&relaxed) {
                return Ok(i);
            }
            Ok(best_by_accuracy())
        }
    }
}

/// Train a fresh probe to recover the protected bit from the generator's
/// output columns on the validation rows; 0.5 means unrecoverable.
pub fn evaluate_fairness(g: &Generator, val: &Dataset, seed: u64) -> Result<f64> {
    if val.schema() != g.target_schema() {
        return Err(Error::Schema(
            "data schema does not match the generator's target schema".into(),
        ));
    }
    let enc = encode(val);
    let generated = generator_forward(g, &enc.generator_inputs())?;
    let features = generated.gather_columns(&[0..g.base_feature_width()]);
    let s_bits: Vec<usize> = enc.protected_bits().iter().map(|&b| b as usize).collect();
    probe_fairness(&features, &s_bits, seed)
}

/// Decode generated rows into a base-schema dataset, labeling each row with
/// the frozen classifier's prediction. Suitable for downstream training.
pub fn generate_cleaned(
    g: &Generator,
    classifier: &Classifier,
    data: &Dataset,
) -> Result<Dataset> {
    if data.schema() != g.target_schema() {
        return Err(Error::Schema(
            "data schema does not match the generator's target schema".into(),
        ));
    }
    if classifier.schema_fingerprint() != g.base_schema().fingerprint() {
        return Err(Error::Schema(
            "classifier was not trained on the generator's base schema".into(),
        ));
    }
    let enc = encode(data);
    let generated = generator_forward(g, &enc.generator_inputs())?;
    let inputs = classifier_inputs(classifier, &generated, g.base_feature_width());
    let labels = hard_labels(&predict(classifier, &inputs)?);
    decode_generated(&generated, g.base_schema(), &labels)
}
