//! Reprogramming: train a fresh encoder so that (frozen decoder ∘ encoder)
//! maps target-schema rows into base-schema rows that the frozen classifier
//! still labels correctly, while a realism discriminator polices the columns
//! the two schemas share and a fairness discriminator hunts for protected
//! information in the generated columns.
//!
//! Three modes nest: `ClassifyOnly` trains against the classifier alone,
//! `Gan` adds the realism discriminator, `FairGan` adds the fairness
//! discriminator on top. Setting the fairness weight to zero makes `FairGan`
//! behave exactly — bit for bit — like `Gan`.

mod train;

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::diffnet::{
    backward, bce, cross_entropy, forward, l2_penalty, Activation, ForwardTrace, Gradients,
    Matrix, MlpConfig, MlpParams, OutputActivation,
};
use crate::error::{Error, Result};
use crate::tabular::{align, AlignmentMap, EncodingLayout, Schema};
use crate::util::component_rng;
use crate::vae::VaeModel;

pub use train::{evaluate_fairness, generate_cleaned, train_reprogram, TrainedReprogram};

pub const GENERATOR_FORMAT: &str = "fairprog.generator.v1";

/// The fresh encoder's mean head saturates smoothly at this many latent
/// units from the origin. The frozen decoder is only trustworthy on the
/// region the base training visited (roughly the prior's support); an
/// unbounded head lets the classification term push latents into decoder
/// saturation, where every adversarial gradient dies.
pub const LATENT_BOUND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprogramMode {
    /// Classification loss only; both discriminators inactive.
    ClassifyOnly,
    /// Classification + realism discriminator.
    Gan,
    /// Classification + realism + fairness discriminators.
    FairGan,
}

impl ReprogramMode {
    pub fn id(&self) -> &'static str {
        match self {
            ReprogramMode::ClassifyOnly => "classify_only",
            ReprogramMode::Gan => "gan",
            ReprogramMode::FairGan => "fairgan",
        }
    }
}

/// What the l2 penalty applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L2Mode {
    /// Weight decay on the trainable encoder (default).
    Weights,
    /// Penalty on the data-space perturbation: squared distance between the
    /// generated shared columns and the input's shared columns.
    DataSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReprogramConfig {
    pub mode: ReprogramMode,
    /// Classification weight; larger favors accuracy over realism.
    pub gamma: f64,
    /// Fairness weight; zero deactivates the fairness discriminator.
    pub delta: f64,
    pub learning_rate: f64,
    pub l2_coeff: f64,
    pub l2_mode: L2Mode,
    pub epochs: usize,
    pub batch_size: usize,
    /// Discriminator updates per generator update.
    pub disc_steps: usize,
    /// Checkpoint evaluation cadence, in epochs (GAN/FairGAN modes).
    pub eval_every: usize,
    /// Early-stopping patience, in epochs (ClassifyOnly mode).
    pub patience: usize,
    /// Hidden widths of both discriminators.
    pub disc_hidden: Vec<usize>,
    pub seed: u64,
    pub tv_threshold: f64,
    pub numeric_bins: usize,
    /// Checkpoint selection tolerates at most this accuracy drop below the
    /// direct baseline (fraction of 1).
    pub accuracy_floor: f64,
}

impl Default for ReprogramConfig {
    fn default() -> Self {
        ReprogramConfig {
            mode: ReprogramMode::ClassifyOnly,
            gamma: 1.0,
            delta: 0.0,
            learning_rate: 1e-3,
            l2_coeff: 1e-4,
            l2_mode: L2Mode::Weights,
            epochs: 60,
            batch_size: 128,
            disc_steps: 1,
            eval_every: 5,
            patience: 10,
            disc_hidden: crate::diffnet::DEFAULT_HIDDEN.to_vec(),
            seed: 0,
            tv_threshold: crate::metrics::DEFAULT_TV_THRESHOLD,
            numeric_bins: crate::metrics::DEFAULT_NUMERIC_BINS,
            accuracy_floor: 0.15,
        }
    }
}

impl ReprogramConfig {
    /// Validate, reporting every offending field at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            problems.push(format!("gamma must be a nonnegative real, got {}", self.gamma));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            problems.push(format!("delta must be a nonnegative real, got {}", self.delta));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!(
                "learning_rate must be a positive real, got {}",
                self.learning_rate
            ));
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            problems.push(format!(
                "l2_coeff must be a nonnegative real, got {}",
                self.l2_coeff
            ));
        }
        if self.epochs == 0 {
            problems.push("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if self.disc_steps == 0 {
            problems.push("disc_steps must be positive".into());
        }
        if self.eval_every == 0 {
            problems.push("eval_every must be positive".into());
        }
        if !(self.tv_threshold > 0.0 && self.tv_threshold <= 1.0) {
            problems.push(format!(
                "tv_threshold must be in (0, 1], got {}",
                self.tv_threshold
            ));
        }
        if self.numeric_bins < 2 {
            problems.push("numeric_bins must be at least 2".into());
        }
        if !(self.accuracy_floor >= 0.0 && self.accuracy_floor <= 1.0) {
            problems.push(format!(
                "accuracy_floor must be in [0, 1], got {}",
                self.accuracy_floor
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// The fairness weight after mode laws: zero unless mode is FairGan.
    pub fn effective_delta(&self) -> f64 {
        match self.mode {
            ReprogramMode::FairGan => self.delta,
            _ => 0.0,
        }
    }

    pub fn realism_active(&self) -> bool {
        self.mode != ReprogramMode::ClassifyOnly
    }

    pub fn fairness_active(&self) -> bool {
        self.effective_delta() > 0.0
    }
}

/// A discriminator: dense net with a single sigmoid score output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discriminator {
    pub config: MlpConfig,
    pub params: MlpParams,
}

impl Discriminator {
    pub fn new(
        input_width: usize,
        hidden: &[usize],
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Self> {
        let mut widths = vec![input_width];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let config = MlpConfig::new(widths, Activation::Relu, OutputActivation::Sigmoid)?;
        let params = MlpParams::init(&config, rng);
        Ok(Discriminator { config, params })
    }

    pub fn scores(&self, inputs: &Matrix) -> Result<Matrix> {
        Ok(forward(&self.config, &self.params, inputs)?.output().clone())
    }

    pub fn input_width(&self) -> usize {
        self.config.input_width()
    }
}

/// The reprogramming generator: a trainable encoder feeding the frozen base
/// decoder. Owns everything needed to run: both schemas, the alignment, and
/// the frozen autoencoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generator {
    format: String,
    encoder_config: MlpConfig,
    encoder_params: MlpParams,
    vae: VaeModel,
    base_schema: Schema,
    target_schema: Schema,
    alignment: AlignmentMap,
    /// Shared columns that are features on both sides, in base-schema order.
    d1_columns: Vec<String>,
}

impl Generator {
    pub fn base_schema(&self) -> &Schema {
        &self.base_schema
    }

    pub fn target_schema(&self) -> &Schema {
        &self.target_schema
    }

    pub fn alignment(&self) -> &AlignmentMap {
        &self.alignment
    }

    pub fn vae(&self) -> &VaeModel {
        &self.vae
    }

    pub fn latent_dim(&self) -> usize {
        self.vae.latent_dim()
    }

    pub fn encoder_config(&self) -> &MlpConfig {
        &self.encoder_config
    }

    pub fn encoder_params(&self) -> &MlpParams {
        &self.encoder_params
    }

    pub(crate) fn encoder_params_mut(&mut self) -> &mut MlpParams {
        &mut self.encoder_params
    }

    pub(crate) fn set_encoder_params(&mut self, params: MlpParams) {
        self.encoder_params = params;
    }

    pub fn encoder_fingerprint(&self) -> String {
        self.encoder_params.fingerprint()
    }

    /// Columns the realism discriminator may see: shared columns that are
    /// features on both sides.
    pub fn d1_columns(&self) -> &[String] {
        &self.d1_columns
    }

    /// Column ranges of the d1 columns in the generated (base) layout.
    pub fn d1_ranges_base(&self) -> Vec<Range<usize>> {
        let layout = EncodingLayout::of(&self.base_schema);
        self.d1_columns
            .iter()
            .map(|c| layout.group(c).expect("d1 column is a base feature"))
            .collect()
    }

    /// Column ranges of the d1 columns in the target layout.
    pub fn d1_ranges_target(&self) -> Vec<Range<usize>> {
        let layout = EncodingLayout::of(&self.target_schema);
        self.d1_columns
            .iter()
            .map(|c| layout.group(c).expect("d1 column is a target feature"))
            .collect()
    }

    /// Width of the d1 slice.
    pub fn d1_width(&self) -> usize {
        self.d1_ranges_base().iter().map(|r| r.len()).sum()
    }

    /// Width of the generator input: the target schema's `(X, S)` encoding.
    pub fn input_width(&self) -> usize {
        self.encoder_config.input_width()
    }

    /// Width of the generator output: the base schema's `(X, S)` encoding.
    pub fn output_width(&self) -> usize {
        self.vae.data_width()
    }

    /// Feature width of the base schema (the generated-columns part of the
    /// output, excluding the generated protected bit).
    pub fn base_feature_width(&self) -> usize {
        self.output_width() - 1
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Generator> {
        let text = std::fs::read_to_string(path)?;
        let g: Generator = serde_json::from_str(&text)?;
        if g.format != GENERATOR_FORMAT {
            return Err(Error::Config(vec![format!(
                "unsupported checkpoint format '{}', expected '{}'",
                g.format, GENERATOR_FORMAT
            )]));
        }
        Ok(g)
    }
}

/// Wire a fresh trainable encoder onto the frozen decoder for a target
/// schema. Handles both directions of dimension change: the encoder maps
/// whatever width the target encodes to into the latent width the decoder
/// expects.
pub fn build_generator(
    vae: &VaeModel,
    base_schema: &Schema,
    target_schema: &Schema,
    seed: u64,
) -> Result<Generator> {
    if !vae.is_frozen() {
        return Err(Error::ModelState(
            "build_generator requires a frozen autoencoder".into(),
        ));
    }
    if vae.schema_fingerprint() != base_schema.fingerprint() {
        return Err(Error::Schema(
            "autoencoder was not trained on the given base schema".into(),
        ));
    }
    let alignment = align(base_schema, target_schema)?;

    let base_layout = EncodingLayout::of(base_schema);
    let target_layout = EncodingLayout::of(target_schema);
    let d1_columns: Vec<String> = alignment
        .shared
        .iter()
        .filter(|c| base_layout.group(c).is_some() && target_layout.group(c).is_some())
        .cloned()
        .collect();

    // Mirror the base encoder's hidden stack; input is the target width,
    // output is (mean, logvar) over the decoder's latent space.
    let vae_hidden: Vec<usize> = {
        let w = &vae.encoder_config().layer_widths;
        w[1..w.len() - 1].to_vec()
    };
    let mut widths = vec![target_layout.xs_width()];
    widths.extend_from_slice(&vae_hidden);
    widths.push(2 * vae.latent_dim());
    let encoder_config = MlpConfig::new(
        widths,
        Activation::Relu,
        OutputActivation::ScaledTanh(LATENT_BOUND),
    )?;
    let encoder_params = MlpParams::init(
        &encoder_config,
        &mut component_rng(seed, "reprogram-enc-init"),
    );

    Ok(Generator {
        format: GENERATOR_FORMAT.to_string(),
        encoder_config,
        encoder_params,
        vae: vae.clone(),
        base_schema: base_schema.clone(),
        target_schema: target_schema.clone(),
        alignment,
        d1_columns,
    })
}

/// Traces of one generator forward pass, kept for the backward pass.
pub(crate) struct GeneratorTrace {
    pub encoder: ForwardTrace,
    pub decoder: ForwardTrace,
}

impl GeneratorTrace {
    pub fn output(&self) -> &Matrix {
        self.decoder.output()
    }
}

pub(crate) fn generator_trace(g: &Generator, batch: &Matrix) -> Result<GeneratorTrace> {
    if batch.cols() != g.input_width() {
        return Err(Error::shape(
            g.input_width().to_string(),
            batch.cols().to_string(),
            "generator input width",
        ));
    }
    let encoder = forward(&g.encoder_config, &g.encoder_params, batch)?;
    // Deterministic mean path: no sampling at reprogramming time.
    let latent = encoder.output().gather_columns(&[0..g.latent_dim()]);
    let decoder = g.vae.decode_frozen(&latent)?;
    Ok(GeneratorTrace { encoder, decoder })
}

/// Deterministic generator forward pass: target `(X', S')` rows to base
/// `(X, S)` rows, categorical groups normalized by the decoder's softmax.
pub fn generator_forward(g: &Generator, batch: &Matrix) -> Result<Matrix> {
    Ok(generator_trace(g, batch)?.output().clone())
}

/// Backpropagate a gradient w.r.t. the generator output into encoder
/// gradients. Decoder weights are frozen; only their input gradient flows.
pub(crate) fn generator_backward(
    g: &Generator,
    trace: &GeneratorTrace,
    output_grad: &Matrix,
) -> Result<Gradients> {
    let z_grad = g.vae.decode_frozen_backward(&trace.decoder, output_grad)?;
    // Only the mean head feeds the decoder; the logvar head gets zeros.
    let rows = z_grad.rows();
    let latent = g.latent_dim();
    let mut enc_upstream = Matrix::zeros(rows, 2 * latent);
    for i in 0..rows {
        enc_upstream.row_mut(i)[..latent].copy_from_slice(z_grad.row(i));
    }
    let (grads, _) = backward(
        &g.encoder_config,
        &g.encoder_params,
        &trace.encoder,
        &enc_upstream,
    )?;
    Ok(grads)
}

/// Per-term breakdown of the generator objective. Inactive terms are
/// exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Non-saturating fooling term against the realism discriminator.
    pub realism: f64,
    /// l2 penalty (weights or data-space, per config).
    pub l2: f64,
    /// gamma-weighted classification cross-entropy.
    pub classification: f64,
    /// delta-weighted confusion term against the fairness discriminator.
    pub fairness: f64,
    pub total: f64,
}

pub(crate) struct CombinedLoss {
    pub breakdown: LossBreakdown,
    pub encoder_grads: Gradients,
}

/// One batch of the target dataset, encoded.
pub(crate) struct Batch<'a> {
    pub inputs: &'a Matrix,
    pub labels: &'a [usize],
}

/// Evaluate the full generator objective and its encoder gradients.
///
/// Terms: non-saturating realism fooling loss against `d1` on the shared
/// columns, the l2 penalty, `gamma` times the frozen classifier's
/// cross-entropy on generated rows vs target labels, and `delta` times a
/// confusion loss pushing `d2`'s score toward one half. Discriminators must
/// be present exactly when the mode makes them active.
pub(crate) fn combined_loss(
    g: &Generator,
    d1: Option<&Discriminator>,
    d2: Option<&Discriminator>,
    classifier: &Classifier,
    batch: &Batch,
    config: &ReprogramConfig,
) -> Result<CombinedLoss> {
    if config.realism_active() != d1.is_some() {
        return Err(Error::ModelState(format!(
            "mode {:?} {} a realism discriminator",
            config.mode,
            if config.realism_active() {
                "requires"
            } else {
                "forbids"
            }
        )));
    }
    if config.fairness_active() != d2.is_some() {
        return Err(Error::ModelState(format!(
            "mode {:?} with delta {} {} a fairness discriminator",
            config.mode,
            config.delta,
            if config.fairness_active() {
                "requires"
            } else {
                "forbids"
            }
        )));
    }

    let trace = generator_trace(g, batch.inputs)?;
    let output = trace.output();
    let rows = output.rows();
    let mut output_grad = Matrix::zeros(rows, output.cols());

    // Classification term through the frozen classifier.
    let feature_width = g.base_feature_width();
    let class_inputs = if classifier.includes_protected() {
        output.clone()
    } else {
        output.gather_columns(&[0..feature_width])
    };
    let class_trace = classifier.forward_trace(&class_inputs)?;
    let ce = cross_entropy(class_trace.output(), batch.labels)?;
    let classification = config.gamma * ce.loss;
    {
        let mut upstream = ce.grad;
        upstream.scale(config.gamma);
        let (_, class_input_grad) = backward(
            classifier.config(),
            classifier.raw_params(),
            &class_trace,
            &upstream,
        )?;
        if classifier.includes_protected() {
            output_grad.add_assign(&class_input_grad);
        } else {
            output_grad.scatter_add_columns(&class_input_grad, &[0..feature_width]);
        }
    }

    // Realism term: make d1 score generated shared columns as real.
    let mut realism = 0.0;
    if let Some(d1) = d1 {
        let ranges = g.d1_ranges_base();
        let shared = output.gather_columns(&ranges);
        let d1_trace = forward(&d1.config, &d1.params, &shared)?;
        let fool = bce(d1_trace.output(), &vec![1.0; rows])?;
        realism = fool.loss;
        let (_, d1_input_grad) = backward(&d1.config, &d1.params, &d1_trace, &fool.grad)?;
        output_grad.scatter_add_columns(&d1_input_grad, &ranges);
    }

    // Fairness term: push d2's score on generated columns toward 1/2.
    let mut fairness = 0.0;
    if let Some(d2) = d2 {
        let delta = config.effective_delta();
        let gen_features = output.gather_columns(&[0..feature_width]);
        let d2_trace = forward(&d2.config, &d2.params, &gen_features)?;
        let confusion = bce(d2_trace.output(), &vec![0.5; rows])?;
        fairness = delta * confusion.loss;
        let mut upstream = confusion.grad;
        upstream.scale(delta);
        let (_, d2_input_grad) = backward(&d2.config, &d2.params, &d2_trace, &upstream)?;
        output_grad.scatter_add_columns(&d2_input_grad, &[0..feature_width]);
    }

    // l2 penalty.
    let mut l2 = 0.0;
    let mut weight_decay: Option<Gradients> = None;
    match config.l2_mode {
        L2Mode::Weights => {
            let (loss, grads) = l2_penalty(&g.encoder_params, config.l2_coeff)?;
            l2 = loss;
            weight_decay = Some(grads);
        }
        L2Mode::DataSpace => {
            // lambda * mean squared perturbation of the shared columns.
            let base_ranges = g.d1_ranges_base();
            let target_ranges = g.d1_ranges_target();
            let gen_shared = output.gather_columns(&base_ranges);
            let real_shared = batch.inputs.gather_columns(&target_ranges);
            let n = rows as f64;
            let mut grad = Matrix::zeros(rows, gen_shared.cols());
            for i in 0..rows {
                for ((&a, &b), gr) in gen_shared
                    .row(i)
                    .iter()
                    .zip(real_shared.row(i))
                    .zip(grad.row_mut(i))
                {
                    let d = a - b;
                    l2 += config.l2_coeff * d * d / n;
                    *gr = 2.0 * config.l2_coeff * d / n;
                }
            }
            output_grad.scatter_add_columns(&grad, &base_ranges);
        }
    }

    let mut encoder_grads = generator_backward(g, &trace, &output_grad)?;
    if let Some(decay) = weight_decay {
        encoder_grads.add_assign(&decay);
    }

    let breakdown = LossBreakdown {
        realism,
        l2,
        classification,
        fairness,
        total: realism + l2 + classification + fairness,
    };
    Ok(CombinedLoss {
        breakdown,
        encoder_grads,
    })
}

/// Structural invariant: every d1 column is shared and is a feature on both
/// sides — label and protected columns never reach the realism
/// discriminator.
pub fn d1_slice_is_shared(g: &Generator) -> bool {
    g.d1_columns.iter().all(|c| {
        g.alignment.shared.contains(c)
            && c != &g.base_schema.label_column
            && c != &g.base_schema.protected_column
            && c != &g.target_schema.label_column
            && c != &g.target_schema.protected_column
    })
}
