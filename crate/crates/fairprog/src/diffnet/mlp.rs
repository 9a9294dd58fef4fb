//! Dense multi-layer perceptrons with explicit forward and backward passes.

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::stable_hash_hex;

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Activation applied to the final layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    /// Softmax within each listed group; slots outside every group get a
    /// sigmoid. Groups must be disjoint, ordered, and within bounds. Mixed
    /// outputs (one-hot blocks next to bounded scalars) use this head.
    SoftmaxGroups(Vec<Range<usize>>),
    /// scale * tanh(z / scale): smooth identity near zero, saturating at
    /// +-scale. Bounds latent heads to the region a frozen decoder was
    /// trained on.
    ScaledTanh(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

impl MlpConfig {
    pub fn new(
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let config = MlpConfig {
            layer_widths,
            hidden_activation,
            output_activation,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(vec![format!(
                "need at least input and output widths, got {:?}",
                self.layer_widths
            )]));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(vec!["layer widths must be positive".into()]));
        }
        match &self.output_activation {
            OutputActivation::SoftmaxGroups(groups) => {
                let out = self.output_width();
                let mut at = 0usize;
                for g in groups {
                    if g.start < at || g.end <= g.start || g.end > out {
                        return Err(Error::Config(vec![format!(
                            "softmax group {}..{} invalid over output width {}",
                            g.start, g.end, out
                        )]));
                    }
                    at = g.end;
                }
            }
            OutputActivation::ScaledTanh(scale) => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::Config(vec![format!(
                        "scaled tanh bound must be positive, got {scale}"
                    )]));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// (fan_in x fan_out), row-major.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// All trainable parameters of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<LayerParams>,
}

impl MlpParams {
    /// Glorot-uniform initialization in ±sqrt(6 / (fan_in + fan_out)).
    pub fn init(config: &MlpConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(config.layer_count());
        for w in config.layer_widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weights = Matrix::zeros(fan_in, fan_out);
            for v in weights.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
            layers.push(LayerParams {
                weights,
                bias: vec![0.0; fan_out],
            });
        }
        MlpParams { layers }
    }

    pub fn zeros(config: &MlpConfig) -> Self {
        let layers = config
            .layer_widths
            .windows(2)
            .map(|w| LayerParams {
                weights: Matrix::zeros(w[0], w[1]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        MlpParams { layers }
    }

    pub fn matches(&self, config: &MlpConfig) -> bool {
        self.layers.len() == config.layer_count()
            && self
                .layers
                .iter()
                .zip(config.layer_widths.windows(2))
                .all(|(l, w)| {
                    l.weights.rows() == w[0] && l.weights.cols() == w[1] && l.bias.len() == w[1]
                })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// Stable fingerprint of all parameter bits; used to verify that frozen
    /// networks stay untouched.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::with_capacity(self.param_count() * 8);
        for layer in &self.layers {
            for v in layer.weights.data() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            for v in &layer.bias {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        stable_hash_hex(&bytes)
    }

}

/// Gradients, shape-congruent with the parameters they differentiate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros(config: &MlpConfig) -> Self {
        Gradients {
            layers: MlpParams::zeros(config).layers,
        }
    }

    pub fn zeros_like(params: &MlpParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerParams {
                weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        Gradients { layers }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_assign(&b.weights);
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for layer in &mut self.layers {
            layer.weights.scale(c);
            for v in &mut layer.bias {
                *v *= c;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for layer in &self.layers {
            for v in layer.weights.data() {
                m = m.max(v.abs());
            }
            for v in &layer.bias {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Every intermediate activation of one forward pass. `layers[0]` is the
/// input batch; `layers[last]` is the network output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.layers.last().unwrap()
    }
}

fn apply_hidden(activation: Activation, z: &mut Matrix) {
    match activation {
        Activation::Relu => {
            for v in z.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Tanh => {
            for v in z.data_mut() {
                *v = v.tanh();
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn apply_output(activation: &OutputActivation, z: &mut Matrix) {
    match activation {
        OutputActivation::Identity => {}
        OutputActivation::Sigmoid => {
            for v in z.data_mut() {
                *v = sigmoid(*v);
            }
        }
        OutputActivation::ScaledTanh(scale) => {
            for v in z.data_mut() {
                *v = scale * (*v / scale).tanh();
            }
        }
        OutputActivation::SoftmaxGroups(groups) => {
            let cols = z.cols();
            let mut in_group = vec![false; cols];
            for g in groups {
                for j in g.clone() {
                    in_group[j] = true;
                }
            }
            for i in 0..z.rows() {
                let row = z.row_mut(i);
                for g in groups {
                    let slice = &mut row[g.clone()];
                    let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for v in slice.iter_mut() {
                        *v = (*v - max).exp();
                        total += *v;
                    }
                    for v in slice.iter_mut() {
                        *v /= total;
                    }
                }
                for (j, v) in row.iter_mut().enumerate() {
                    if !in_group[j] {
                        *v = sigmoid(*v);
                    }
                }
            }
        }
    }
}

/// Run the network, returning every layer's activations (the backward pass
/// needs them).
pub fn forward(config: &MlpConfig, params: &MlpParams, batch: &Matrix) -> Result<ForwardTrace> {
    if batch.cols() != config.input_width() {
        return Err(Error::shape(
            config.input_width().to_string(),
            batch.cols().to_string(),
            "forward input width",
        ));
    }
    if !params.matches(config) {
        return Err(Error::shape(
            format!("{:?}", config.layer_widths),
            "params",
            "forward params shape",
        ));
    }
    let mut layers = Vec::with_capacity(config.layer_count() + 1);
    layers.push(batch.clone());
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = layers[l].matmul(&layer.weights);
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        if l + 1 == config.layer_count() {
            apply_output(&config.output_activation, &mut z);
        } else {
            apply_hidden(config.hidden_activation, &mut z);
        }
        layers.push(z);
    }
    Ok(ForwardTrace { layers })
}

/// Pull an upstream gradient (w.r.t. the network output) back through the
/// trace, returning parameter gradients and the gradient w.r.t. the input
/// batch. The input gradient is what lets a loss chain through a frozen
/// network into the trainable one feeding it.
pub fn backward(
    config: &MlpConfig,
    params: &MlpParams,
    trace: &ForwardTrace,
    upstream: &Matrix,
) -> Result<(Gradients, Matrix)> {
    let out = trace.output();
    if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
        return Err(Error::shape(
            format!("{}x{}", out.rows(), out.cols()),
            format!("{}x{}", upstream.rows(), upstream.cols()),
            "backward upstream shape",
        ));
    }
    if trace.layers.len() != config.layer_count() + 1 {
        return Err(Error::shape(
            (config.layer_count() + 1).to_string(),
            trace.layers.len().to_string(),
            "backward trace length",
        ));
    }

    // Gradient w.r.t. the final pre-activation.
    let mut delta = output_delta(&config.output_activation, out, upstream);

    let mut grads = Gradients::zeros(config);
    for l in (0..config.layer_count()).rev() {
        let input = &trace.layers[l];
        // dW = input^T * delta; db = column sums of delta.
        grads.layers[l].weights = input.transpose_matmul(&delta);
        let bias = &mut grads.layers[l].bias;
        for i in 0..delta.rows() {
            for (b, d) in bias.iter_mut().zip(delta.row(i)) {
                *b += d;
            }
        }
        // Gradient w.r.t. this layer's input.
        let mut input_grad = delta.matmul_transpose(&params.layers[l].weights);
        if l > 0 {
            // Chain through the previous layer's hidden activation.
            match config.hidden_activation {
                Activation::Relu => {
                    for (g, &a) in input_grad.data_mut().iter_mut().zip(input.data()) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                Activation::Tanh => {
                    for (g, &a) in input_grad.data_mut().iter_mut().zip(input.data()) {
                        *g *= 1.0 - a * a;
                    }
                }
            }
        }
        delta = input_grad;
    }
    Ok((grads, delta))
}

/// Convert dL/d(output) to dL/d(pre-activation) for the output head.
fn output_delta(activation: &OutputActivation, output: &Matrix, upstream: &Matrix) -> Matrix {
    let mut delta = upstream.clone();
    match activation {
        OutputActivation::Identity => {}
        OutputActivation::Sigmoid => {
            for (d, &y) in delta.data_mut().iter_mut().zip(output.data()) {
                *d *= y * (1.0 - y);
            }
        }
        OutputActivation::ScaledTanh(scale) => {
            // d/dz [s tanh(z/s)] = 1 - (y/s)^2
            for (d, &y) in delta.data_mut().iter_mut().zip(output.data()) {
                let t = y / scale;
                *d *= 1.0 - t * t;
            }
        }
        OutputActivation::SoftmaxGroups(groups) => {
            let cols = output.cols();
            let mut in_group = vec![false; cols];
            for g in groups {
                for j in g.clone() {
                    in_group[j] = true;
                }
            }
            for i in 0..output.rows() {
                let y = output.row(i);
                let d = delta.row_mut(i);
                for g in groups {
                    let dot: f64 = g.clone().map(|j| d[j] * y[j]).sum();
                    for j in g.clone() {
                        d[j] = y[j] * (d[j] - dot);
                    }
                }
                for j in 0..cols {
                    if !in_group[j] {
                        d[j] *= y[j] * (1.0 - y[j]);
                    }
                }
            }
        }
    }
    delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::component_rng;

    #[test]
    fn identity_single_layer_passes_input_through() {
        let config = MlpConfig::new(
            vec![3, 3],
            Activation::Relu,
            OutputActivation::Identity,
        )
        .unwrap();
        let mut params = MlpParams::zeros(&config);
        for i in 0..3 {
            params.layers[0].weights.set(i, i, 1.0);
        }
        let batch = Matrix::from_rows(&[vec![0.5, -1.5, 2.0]]);
        let trace = forward(&config, &params, &batch).unwrap();
        assert_eq!(trace.output().row(0), batch.row(0));
    }

    #[test]
    fn sigmoid_of_zero_logit_is_half() {
        let config = MlpConfig::new(vec![2, 1], Activation::Relu, OutputActivation::Sigmoid)
            .unwrap();
        let params = MlpParams::zeros(&config);
        let batch = Matrix::from_rows(&[vec![3.0, -4.0]]);
        let trace = forward(&config, &params, &batch).unwrap();
        assert_eq!(trace.output().get(0, 0), 0.5);
    }

    #[test]
    fn softmax_group_of_equal_logits_is_uniform() {
        let config = MlpConfig::new(
            vec![2, 3],
            Activation::Relu,
            OutputActivation::SoftmaxGroups(vec![0..3]),
        )
        .unwrap();
        let params = MlpParams::zeros(&config);
        let batch = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let trace = forward(&config, &params, &batch).unwrap();
        for &v in trace.output().row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_groups_sum_to_one_and_rest_is_sigmoid() {
        let config = MlpConfig::new(
            vec![4, 6],
            Activation::Tanh,
            OutputActivation::SoftmaxGroups(vec![0..3, 4..6]),
        )
        .unwrap();
        let mut rng = component_rng(11, "test");
        let params = MlpParams::init(&config, &mut rng);
        let mut batch = Matrix::zeros(5, 4);
        for v in batch.data_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        let trace = forward(&config, &params, &batch).unwrap();
        for i in 0..5 {
            let row = trace.output().row(i);
            let g1: f64 = row[0..3].iter().sum();
            let g2: f64 = row[4..6].iter().sum();
            assert!((g1 - 1.0).abs() < 1e-9);
            assert!((g2 - 1.0).abs() < 1e-9);
            assert!(row[3] > 0.0 && row[3] < 1.0);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let config = MlpConfig::new(
            vec![3, 4, 2],
            Activation::Relu,
            OutputActivation::Sigmoid,
        )
        .unwrap();
        let mut rng = component_rng(5, "test");
        let params = MlpParams::init(&config, &mut rng);
        let batch = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let trace = forward(&config, &params, &batch).unwrap();
        let upstream = Matrix::zeros(1, 2);
        let (grads, input_grad) = backward(&config, &params, &trace, &upstream).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert!(input_grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_input_width() {
        let config = MlpConfig::new(vec![3, 2], Activation::Relu, OutputActivation::Identity)
            .unwrap();
        let params = MlpParams::zeros(&config);
        let batch = Matrix::zeros(1, 4);
        assert!(forward(&config, &params, &batch).is_err());
    }

    #[test]
    fn rejects_overlapping_softmax_groups() {
        let config = MlpConfig::new(
            vec![2, 4],
            Activation::Relu,
            OutputActivation::SoftmaxGroups(vec![0..2, 1..4]),
        );
        assert!(config.is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let config = MlpConfig::new(vec![4, 8, 2], Activation::Relu, OutputActivation::Identity)
            .unwrap();
        let a = MlpParams::init(&config, &mut component_rng(3, "x"));
        let b = MlpParams::init(&config, &mut component_rng(3, "x"));
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = MlpParams::init(&config, &mut component_rng(4, "x"));
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
