//! The variational autoencoder trained on the source dataset's `(X, S)`
//! rows. After base training both halves freeze; the decoder then serves as
//! the fixed output stage of every reprogramming generator, which is what
//! lets a generator change dimension between schemas.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffnet::{
    adam_step, backward, forward, Activation, AdamHyper, ForwardTrace, Gradients, Matrix,
    MlpConfig, MlpParams, OptimizerState, OutputActivation, DEFAULT_HIDDEN, PROB_FLOOR,
};
use crate::error::{Error, Result};
use crate::metrics::{histogram, tv_distance, DEFAULT_NUMERIC_BINS};
use crate::tabular::{decode_generated, encode, ColumnKind, Dataset, EncodingLayout, Schema};
use crate::util::component_rng;

pub const VAE_FORMAT: &str = "fairprog.vae.v1";
pub const DEFAULT_LATENT_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeTrainConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight on the squared-error term of numeric columns, i.e. a Gaussian
    /// likelihood with fixed variance 1/(2w). Unit weight makes low-variance
    /// numerics too cheap to ignore relative to the KL term and the decoder
    /// collapses them to their mean.
    pub numeric_loss_weight: f64,
    /// Weight on the cross-entropy terms (categorical groups and the
    /// protected bit). Sharpens the posterior enough that the argmax
    /// reconstruction keeps category marginals.
    pub categorical_loss_weight: f64,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            latent_dim: DEFAULT_LATENT_DIM,
            hidden: DEFAULT_HIDDEN.to_vec(),
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            numeric_loss_weight: 150.0,
            categorical_loss_weight: 5.0,
        }
    }
}

/// Encoder/decoder pair over the `(X, S)` encoding of a schema.
///
/// The encoder emits means and log-variances (each `latent_dim` wide); the
/// decoder maps latents back to `(X, S)` with per-group softmax heads for
/// categorical features and sigmoids for numerics and the protected bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeModel {
    format: String,
    encoder_config: MlpConfig,
    encoder_params: MlpParams,
    decoder_config: MlpConfig,
    decoder_params: MlpParams,
    latent_dim: usize,
    numeric_loss_weight: f64,
    categorical_loss_weight: f64,
    schema_fingerprint: String,
    frozen: bool,
}

impl VaeModel {
    /// Fresh, unfrozen model for a schema. Training and gradient checks
    /// start here.
    pub fn new(schema: &Schema, config: &VaeTrainConfig, seed: u64) -> Result<VaeModel> {
        let layout = EncodingLayout::of(schema);
        let width = layout.xs_width();
        if config.latent_dim == 0 {
            return Err(Error::Config(vec!["latent_dim must be positive".into()]));
        }

        let mut enc_widths = vec![width];
        enc_widths.extend_from_slice(&config.hidden);
        enc_widths.push(2 * config.latent_dim);
        let encoder_config =
            MlpConfig::new(enc_widths, Activation::Relu, OutputActivation::Identity)?;

        let mut dec_widths = vec![config.latent_dim];
        dec_widths.extend(config.hidden.iter().rev());
        dec_widths.push(width);
        // Softmax per categorical group; the numeric slots and the trailing
        // protected bit fall through to sigmoid.
        let decoder_config = MlpConfig::new(
            dec_widths,
            Activation::Relu,
            OutputActivation::SoftmaxGroups(layout.categorical_groups(schema)),
        )?;

        let mut rng = component_rng(seed, "vae-init");
        let encoder_params = MlpParams::init(&encoder_config, &mut rng);
        let decoder_params = MlpParams::init(&decoder_config, &mut rng);
        Ok(VaeModel {
            format: VAE_FORMAT.to_string(),
            encoder_config,
            encoder_params,
            decoder_config,
            decoder_params,
            latent_dim: config.latent_dim,
            numeric_loss_weight: config.numeric_loss_weight,
            categorical_loss_weight: config.categorical_loss_weight,
            schema_fingerprint: schema.fingerprint(),
            frozen: false,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Width of the `(X, S)` vectors this model encodes and decodes.
    pub fn data_width(&self) -> usize {
        self.encoder_config.input_width()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn schema_fingerprint(&self) -> &str {
        &self.schema_fingerprint
    }

    pub fn decoder_config(&self) -> &MlpConfig {
        &self.decoder_config
    }

    pub fn encoder_config(&self) -> &MlpConfig {
        &self.encoder_config
    }

    pub fn decoder_fingerprint(&self) -> String {
        self.decoder_params.fingerprint()
    }

    pub fn encoder_fingerprint(&self) -> String {
        self.encoder_params.fingerprint()
    }

    /// Clone with replaced parameters (unfrozen); gradient checks perturb
    /// one half at a time through this.
    pub fn with_params(&self, encoder: MlpParams, decoder: MlpParams) -> VaeModel {
        VaeModel {
            encoder_params: encoder,
            decoder_params: decoder,
            frozen: false,
            ..self.clone()
        }
    }

    pub fn encoder_params(&self) -> &MlpParams {
        &self.encoder_params
    }

    pub fn decoder_params(&self) -> &MlpParams {
        &self.decoder_params
    }

    /// Encoder means for a batch (the deterministic evaluation path).
    pub fn encode_mean(&self, batch: &Matrix) -> Result<Matrix> {
        let trace = forward(&self.encoder_config, &self.encoder_params, batch)?;
        Ok(split_mean_logvar(trace.output(), self.latent_dim).0)
    }

    /// Decoder forward pass on a latent batch. Requires a frozen model:
    /// this is the reprogramming entry point, and reprogramming must never
    /// touch decoder weights.
    pub fn decode_frozen(&self, latents: &Matrix) -> Result<ForwardTrace> {
        if !self.frozen {
            return Err(Error::ModelState(
                "decode_frozen requires a frozen model".into(),
            ));
        }
        forward(&self.decoder_config, &self.decoder_params, latents)
    }

    /// Gradient of a loss w.r.t. the latent inputs of `decode_frozen`.
    /// Decoder weight gradients are computed and deliberately dropped;
    /// callers can only ever update what feeds the latents.
    pub fn decode_frozen_backward(
        &self,
        trace: &ForwardTrace,
        upstream: &Matrix,
    ) -> Result<Matrix> {
        if !self.frozen {
            return Err(Error::ModelState(
                "decode_frozen_backward requires a frozen model".into(),
            ));
        }
        let (_, input_grad) = backward(&self.decoder_config, &self.decoder_params, trace, upstream)?;
        Ok(input_grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VaeModel> {
        let text = std::fs::read_to_string(path)?;
        let model: VaeModel = serde_json::from_str(&text)?;
        if model.format != VAE_FORMAT {
            return Err(Error::Config(vec![format!(
                "unsupported checkpoint format '{}', expected '{}'",
                model.format, VAE_FORMAT
            )]));
        }
        Ok(model)
    }
}

fn split_mean_logvar(encoder_output: &Matrix, latent_dim: usize) -> (Matrix, Matrix) {
    let mean = encoder_output.gather_columns(&[0..latent_dim]);
    let logvar = encoder_output.gather_columns(&[latent_dim..2 * latent_dim]);
    (mean, logvar)
}

/// z = mean + exp(logvar / 2) * noise, elementwise. Differentiable in both
/// mean and logvar.
pub fn reparameterize(mean: &Matrix, logvar: &Matrix, noise: &Matrix) -> Result<Matrix> {
    if mean.rows() != logvar.rows()
        || mean.cols() != logvar.cols()
        || mean.rows() != noise.rows()
        || mean.cols() != noise.cols()
    {
        return Err(Error::shape(
            format!("{}x{}", mean.rows(), mean.cols()),
            format!(
                "logvar {}x{}, noise {}x{}",
                logvar.rows(),
                logvar.cols(),
                noise.rows(),
                noise.cols()
            ),
            "reparameterize",
        ));
    }
    let mut z = mean.clone();
    for ((z, &lv), &n) in z
        .data_mut()
        .iter_mut()
        .zip(logvar.data())
        .zip(noise.data())
    {
        *z += (lv / 2.0).exp() * n;
    }
    Ok(z)
}

/// Loss terms and gradients of one evidence-lower-bound evaluation.
#[derive(Debug, Clone)]
pub struct ElboTerms {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub encoder_grads: Gradients,
    pub decoder_grads: Gradients,
}

/// Reconstruction + KL loss of a batch under the model, with gradients for
/// both halves.
///
/// Reconstruction is cross-entropy for categorical groups and the protected
/// bit, squared error for numerics, summed over dimensions; the KL term is
/// `0.5 * sum(mean^2 + var - 1 - log var)` per latent dimension. Both are
/// averaged over the batch.
pub fn elbo_loss(
    model: &VaeModel,
    schema: &Schema,
    batch: &Matrix,
    noise: &Matrix,
) -> Result<ElboTerms> {
    if batch.cols() != model.data_width() {
        return Err(Error::shape(
            model.data_width().to_string(),
            batch.cols().to_string(),
            "elbo batch width",
        ));
    }
    let n = batch.rows() as f64;
    let latent = model.latent_dim;

    let enc_trace = forward(&model.encoder_config, &model.encoder_params, batch)?;
    let (mean, logvar) = split_mean_logvar(enc_trace.output(), latent);
    let z = reparameterize(&mean, &logvar, noise)?;
    let dec_trace = forward(&model.decoder_config, &model.decoder_params, &z)?;
    let recon = dec_trace.output();

    // Reconstruction loss and its gradient w.r.t. the decoder output.
    let layout = EncodingLayout::of(schema);
    let w_num = model.numeric_loss_weight;
    let w_cat = model.categorical_loss_weight;
    let mut recon_loss = 0.0;
    let mut recon_grad = Matrix::zeros(recon.rows(), recon.cols());
    let s_slot = layout.feature_width();
    for i in 0..batch.rows() {
        let x = batch.row(i);
        let y = recon.row(i);
        let g = recon_grad.row_mut(i);
        for (name, range) in layout.groups() {
            match &schema.column(name).expect("layout column").kind {
                ColumnKind::Categorical { .. } => {
                    for j in range.clone() {
                        if x[j] > 0.0 {
                            let p = y[j].max(PROB_FLOOR);
                            recon_loss += -w_cat * x[j] * p.ln();
                            g[j] = -w_cat * x[j] / (p * n);
                        }
                    }
                }
                ColumnKind::Numeric { .. } => {
                    let j = range.start;
                    let d = y[j] - x[j];
                    recon_loss += w_num * d * d;
                    g[j] = 2.0 * w_num * d / n;
                }
            }
        }
        // Protected bit: binary cross-entropy.
        let t = x[s_slot];
        let p = y[s_slot].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        recon_loss += -w_cat * (t * p.ln() + (1.0 - t) * (1.0 - p).ln());
        g[s_slot] = w_cat * (-t / p + (1.0 - t) / (1.0 - p)) / n;
    }
    recon_loss /= n;

    // KL divergence to the standard normal, per dimension, mean over batch.
    let mut kl = 0.0;
    for i in 0..mean.rows() {
        for (&m, &lv) in mean.row(i).iter().zip(logvar.row(i)) {
            kl += 0.5 * (m * m + lv.exp() - 1.0 - lv);
        }
    }
    kl /= n;

    // Backward: decoder, then reparameterization, then encoder.
    let (decoder_grads, z_grad) =
        backward(&model.decoder_config, &model.decoder_params, &dec_trace, &recon_grad)?;

    // dL/dmean = dL/dz + mean/n; dL/dlogvar = dL/dz * noise * exp(logvar/2)/2
    //            + (exp(logvar) - 1) / (2n).
    let mut enc_upstream = Matrix::zeros(batch.rows(), 2 * latent);
    for i in 0..batch.rows() {
        let zg = z_grad.row(i);
        let m = mean.row(i);
        let lv = logvar.row(i);
        let nz = noise.row(i);
        let up = enc_upstream.row_mut(i);
        for k in 0..latent {
            up[k] = zg[k] + m[k] / n;
            up[latent + k] =
                zg[k] * nz[k] * (lv[k] / 2.0).exp() / 2.0 + (lv[k].exp() - 1.0) / (2.0 * n);
        }
    }
    let (encoder_grads, _) =
        backward(&model.encoder_config, &model.encoder_params, &enc_trace, &enc_upstream)?;

    Ok(ElboTerms {
        loss: recon_loss + kl,
        reconstruction: recon_loss,
        kl,
        encoder_grads,
        decoder_grads,
    })
}

/// Closed-form KL term alone, for diagnostics and tests.
pub fn kl_term(mean: &Matrix, logvar: &Matrix) -> f64 {
    let n = mean.rows() as f64;
    let mut kl = 0.0;
    for (m, lv) in mean.data().iter().zip(logvar.data()) {
        kl += 0.5 * (m * m + lv.exp() - 1.0 - lv);
    }
    kl / n
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeTrainReport {
    /// (epoch, train loss, val loss) per epoch.
    pub curve: Vec<(usize, f64, f64)>,
    pub final_val_loss: f64,
    /// Per-column TV distance between the validation data and its
    /// deterministic reconstruction.
    pub reconstruction_tv: Vec<(String, f64)>,
}

/// Train on `(X, S)` rows and freeze. The protected column is part of the
/// input by construction; the label column is not modeled.
pub fn train_vae(
    train: &Dataset,
    val: &Dataset,
    config: &VaeTrainConfig,
    seed: u64,
) -> Result<(VaeModel, VaeTrainReport)> {
    if train.schema() != val.schema() {
        return Err(Error::Schema(
            "train and validation sets must share a schema".into(),
        ));
    }
    let schema = train.schema().clone();
    let mut model = VaeModel::new(&schema, config, seed)?;
    let layout = EncodingLayout::of(&schema);
    if config.latent_dim >= layout.xs_width() {
        eprintln!(
            "warning: latent_dim {} >= encoded width {}; the bottleneck is degenerate",
            config.latent_dim,
            layout.xs_width()
        );
    }

    let train_inputs = encode(train).generator_inputs();
    let val_inputs = encode(val).generator_inputs();

    let mut rng = component_rng(seed, "vae-train");
    let mut enc_state = OptimizerState::new(
        &model.encoder_config,
        AdamHyper::with_learning_rate(config.learning_rate),
    );
    let mut dec_state = OptimizerState::new(
        &model.decoder_config,
        AdamHyper::with_learning_rate(config.learning_rate),
    );

    // Fixed validation noise keeps the monitoring loss deterministic.
    let val_noise = sample_noise(&mut rng, val_inputs.rows(), config.latent_dim);

    let n = train_inputs.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut val_loss = f64::NAN;
    for epoch in 0..config.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = train_inputs.select_rows(chunk);
            let noise = sample_noise(&mut rng, batch.rows(), config.latent_dim);
            let terms = elbo_loss(&model, &schema, &batch, &noise)?;
            if !terms.loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "vae: non-finite loss at epoch {epoch}"
                )));
            }
            adam_step(&mut model.encoder_params, &terms.encoder_grads, &mut enc_state)?;
            adam_step(&mut model.decoder_params, &terms.decoder_grads, &mut dec_state)?;
            epoch_loss += terms.loss;
            batches += 1;
        }
        let val_terms = elbo_loss(&model, &schema, &val_inputs, &val_noise)?;
        val_loss = val_terms.loss;
        curve.push((epoch, epoch_loss / batches as f64, val_loss));
    }

    model.frozen = true;

    let recon = reconstruct(&model, val)?;
    let mut reconstruction_tv = Vec::new();
    for col in schema.feature_columns() {
        let a = histogram(val, &col.name, DEFAULT_NUMERIC_BINS)?;
        let b = histogram(&recon, &col.name, DEFAULT_NUMERIC_BINS)?;
        reconstruction_tv.push((col.name.clone(), tv_distance(&a, &b)?));
    }

    Ok((
        model,
        VaeTrainReport {
            curve,
            final_val_loss: val_loss,
            reconstruction_tv,
        },
    ))
}

fn sample_noise(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let mut noise = Matrix::zeros(rows, cols);
    for v in noise.data_mut() {
        *v = StandardNormal.sample(rng);
    }
    noise
}

/// Deterministic reconstruction: encode to the latent mean (no sampling),
/// decode, and convert back to a dataset. The label column passes through
/// unchanged since the model does not represent it.
pub fn reconstruct(model: &VaeModel, data: &Dataset) -> Result<Dataset> {
    if data.schema().fingerprint() != model.schema_fingerprint {
        return Err(Error::Schema(
            "dataset schema does not match the model's training schema".into(),
        ));
    }
    let encoded = encode(data);
    let mean = model.encode_mean(&encoded.generator_inputs())?;
    let dec_trace = forward(&model.decoder_config, &model.decoder_params, &mean)?;
    decode_generated(dec_trace.output(), data.schema(), &data.labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{grad_check, rel_error};
    use crate::tabular::{synth_generate, ColumnSpec, SynthColumn, SynthRole, SynthSpec};
    use rand::Rng;

    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                ColumnSpec::numeric("x1", 0.0, 1.0),
                ColumnSpec::categorical("c1", &["a", "b", "c"]),
                ColumnSpec::numeric("x2", -1.0, 1.0),
                ColumnSpec::categorical("y", &["no", "yes"]),
                ColumnSpec::categorical("s", &["g0", "g1"]),
            ],
            "y",
            "s",
        )
        .unwrap()
    }

    fn small_config() -> VaeTrainConfig {
        VaeTrainConfig {
            latent_dim: 3,
            hidden: vec![8, 8],
            epochs: 2,
            batch_size: 16,
            ..VaeTrainConfig::default()
        }
    }

    #[test]
    fn reparameterize_zero_noise_returns_mean() {
        let mean = Matrix::from_rows(&[vec![0.3, -0.7]]);
        let logvar = Matrix::from_rows(&[vec![0.5, 1.5]]);
        let noise = Matrix::zeros(1, 2);
        let z = reparameterize(&mean, &logvar, &noise).unwrap();
        assert_eq!(z.data(), mean.data());
    }

    #[test]
    fn reparameterize_unit_variance_adds_noise() {
        let mean = Matrix::from_rows(&[vec![0.25]]);
        let logvar = Matrix::zeros(1, 1);
        let noise = Matrix::from_rows(&[vec![1.5]]);
        let z = reparameterize(&mean, &logvar, &noise).unwrap();
        assert!((z.get(0, 0) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn reparameterize_closed_form() {
        // logvar = 2 ln 2 means sigma = 2, so mean 0 and noise 1 give z = 2.
        let mean = Matrix::zeros(1, 1);
        let logvar = Matrix::from_rows(&[vec![2.0 * (2.0f64).ln()]]);
        let noise = Matrix::from_rows(&[vec![1.0]]);
        let z = reparameterize(&mean, &logvar, &noise).unwrap();
        assert!((z.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kl_closed_forms() {
        let zero = Matrix::zeros(1, 1);
        assert_eq!(kl_term(&zero, &zero), 0.0);
        let mean = Matrix::from_rows(&[vec![1.0]]);
        assert!((kl_term(&mean, &zero) - 0.5).abs() < 1e-15);
        // KL is nonnegative and zero only at (0, 0).
        let lv = Matrix::from_rows(&[vec![0.3]]);
        assert!(kl_term(&zero, &lv) > 0.0);
    }

    #[test]
    fn elbo_gradients_pass_finite_difference_check() {
        let schema = toy_schema();
        let model = VaeModel::new(&schema, &small_config(), 3).unwrap();
        let mut rng = component_rng(4, "elbo-fd");
        let data = synth_generate(&SynthSpec {
            columns: vec![
                SynthColumn {
                    spec: ColumnSpec::numeric("x1", 0.0, 1.0),
                    role: SynthRole::Feature { biased: false },
                },
                SynthColumn {
                    spec: ColumnSpec::categorical("c1", &["a", "b", "c"]),
                    role: SynthRole::Feature { biased: false },
                },
                SynthColumn {
                    spec: ColumnSpec::numeric("x2", -1.0, 1.0),
                    role: SynthRole::Feature { biased: false },
                },
                SynthColumn {
                    spec: ColumnSpec::categorical("y", &["no", "yes"]),
                    role: SynthRole::Outcome {
                        weights: vec![("x1".into(), 1.0)],
                        sharpness: 3.0,
                    },
                },
                SynthColumn {
                    spec: ColumnSpec::categorical("s", &["g0", "g1"]),
                    role: SynthRole::Protected,
                },
            ],
            label_column: "y".into(),
            n_rows: 6,
            bias_strength: 0.0,
            seed: 5,
        })
        .unwrap();
        let batch = encode(&data).generator_inputs();
        let mut noise = Matrix::zeros(batch.rows(), model.latent_dim());
        for v in noise.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }

        // Encoder side.
        let enc_report = grad_check(
            model.encoder_params(),
            |p| {
                let m = model.with_params(p.clone(), model.decoder_params().clone());
                let terms = elbo_loss(&m, &schema, &batch, &noise).unwrap();
                (terms.loss, terms.encoder_grads)
            },
            1e-4,
        );
        assert!(enc_report.pass, "encoder max rel {}", enc_report.max_rel_error);

        // Decoder side.
        let dec_report = grad_check(
            model.decoder_params(),
            |p| {
                let m = model.with_params(model.encoder_params().clone(), p.clone());
                let terms = elbo_loss(&m, &schema, &batch, &noise).unwrap();
                (terms.loss, terms.decoder_grads)
            },
            1e-4,
        );
        assert!(dec_report.pass, "decoder max rel {}", dec_report.max_rel_error);
    }

    fn synth_dataset(n: usize, seed: u64) -> Dataset {
        synth_generate(&SynthSpec {
            columns: vec![
                SynthColumn {
                    spec: ColumnSpec::categorical("s", &["g0", "g1"]),
                    role: SynthRole::Protected,
                },
                SynthColumn {
                    spec: ColumnSpec::numeric("n1", 0.0, 1.0),
                    role: SynthRole::Feature { biased: false },
                },
                SynthColumn {
                    spec: ColumnSpec::numeric("n2", 0.0, 5.0),
                    role: SynthRole::Feature { biased: false },
                },
                SynthColumn {
                    spec: ColumnSpec::categorical("c1", &["a", "b", "c"]),
                    role: SynthRole::Feature { biased: false },
                },
                SynthColumn {
                    spec: ColumnSpec::categorical("c2", &["p", "q"]),
                    role: SynthRole::Feature { biased: false },
                },
                SynthColumn {
                    spec: ColumnSpec::categorical("y", &["no", "yes"]),
                    role: SynthRole::Outcome {
                        weights: vec![("n1".into(), 1.5), ("n2".into(), 1.0)],
                        sharpness: 4.0,
                    },
                },
            ],
            label_column: "y".into(),
            n_rows: n,
            bias_strength: 0.0,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn training_learns_reconstruction() {
        let data = synth_dataset(4000, 9);
        let (train, val, _) = data.split((0.7, 0.15, 0.15), 1).unwrap();
        let config = VaeTrainConfig {
            epochs: 60,
            ..VaeTrainConfig::default()
        };
        let (model, report) = train_vae(&train, &val, &config, 11).unwrap();
        assert!(model.is_frozen());
        // Loss decreased over training.
        assert!(report.curve.last().unwrap().2 < report.curve[0].2);
        for (col, tv) in &report.reconstruction_tv {
            assert!(*tv <= 0.15, "column {col}: reconstruction tv {tv}");
        }
    }

    #[test]
    fn same_seed_reproduces_training() {
        let data = synth_dataset(600, 2);
        let (train, val, _) = data.split((0.7, 0.15, 0.15), 1).unwrap();
        let config = VaeTrainConfig {
            latent_dim: 4,
            hidden: vec![16],
            epochs: 3,
            ..VaeTrainConfig::default()
        };
        let (m1, r1) = train_vae(&train, &val, &config, 21).unwrap();
        let (m2, r2) = train_vae(&train, &val, &config, 21).unwrap();
        assert_eq!(m1.encoder_fingerprint(), m2.encoder_fingerprint());
        assert_eq!(m1.decoder_fingerprint(), m2.decoder_fingerprint());
        assert_eq!(r1.final_val_loss, r2.final_val_loss);
    }

    #[test]
    fn untrained_model_reconstructs_to_valid_dataset() {
        let data = synth_dataset(50, 3);
        let config = small_config();
        let mut model = VaeModel::new(data.schema(), &config, 1).unwrap();
        model.frozen = true;
        let recon = reconstruct(&model, &data).unwrap();
        assert_eq!(recon.len(), data.len());
        assert_eq!(recon.schema(), data.schema());
    }

    #[test]
    fn reconstruction_is_deterministic() {
        let data = synth_dataset(200, 4);
        let (train, val, _) = data.split((0.6, 0.2, 0.2), 1).unwrap();
        let config = VaeTrainConfig {
            latent_dim: 4,
            hidden: vec![16],
            epochs: 2,
            ..VaeTrainConfig::default()
        };
        let (model, _) = train_vae(&train, &val, &config, 5).unwrap();
        let a = reconstruct(&model, &val).unwrap();
        let b = reconstruct(&model, &val).unwrap();
        assert!(a.approx_eq(&b, 0.0));
    }

    #[test]
    fn decode_frozen_rejects_unfrozen_model() {
        let data = synth_dataset(30, 5);
        let model = VaeModel::new(data.schema(), &small_config(), 2).unwrap();
        let z = Matrix::zeros(1, model.latent_dim());
        assert!(model.decode_frozen(&z).is_err());
    }

    #[test]
    fn decode_frozen_output_groups_sum_to_one() {
        let data = synth_dataset(30, 6);
        let mut model = VaeModel::new(data.schema(), &small_config(), 2).unwrap();
        model.frozen = true;
        let mut rng = component_rng(8, "z");
        let mut z = Matrix::zeros(4, model.latent_dim());
        for v in z.data_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        let trace = model.decode_frozen(&z).unwrap();
        let layout = EncodingLayout::of(data.schema());
        let out = trace.output();
        for i in 0..out.rows() {
            for range in layout.categorical_groups(data.schema()) {
                let total: f64 = out.row(i)[range].iter().sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
        // Same latents twice: identical outputs.
        let again = model.decode_frozen(&z).unwrap();
        assert_eq!(trace.output().data(), again.output().data());
    }

    #[test]
    fn frozen_decoder_gradients_flow_to_latents_only() {
        let data = synth_dataset(30, 7);
        let mut model = VaeModel::new(data.schema(), &small_config(), 3).unwrap();
        model.frozen = true;

        let mut rng = component_rng(9, "z2");
        let z0: Vec<f64> = (0..model.latent_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();

        // Loss: sum of decoder outputs.
        let loss_of = |z: &[f64]| {
            let zm = Matrix::from_vec(1, z.len(), z.to_vec());
            let trace = model.decode_frozen(&zm).unwrap();
            trace.output().data().iter().sum::<f64>()
        };
        let fd = crate::diffnet::fd_input_gradient(&z0, loss_of);

        let zm = Matrix::from_vec(1, z0.len(), z0.clone());
        let trace = model.decode_frozen(&zm).unwrap();
        let upstream = Matrix::from_vec(
            1,
            model.data_width(),
            vec![1.0; model.data_width()],
        );
        let before = model.decoder_fingerprint();
        let z_grad = model.decode_frozen_backward(&trace, &upstream).unwrap();
        assert_eq!(model.decoder_fingerprint(), before);
        for (a, b) in fd.iter().zip(z_grad.data()) {
            assert!(rel_error(*a, *b) < 1e-4, "fd {a} vs analytic {b}");
        }
    }
}
