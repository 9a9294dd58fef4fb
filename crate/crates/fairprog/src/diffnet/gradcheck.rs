//! Central-finite-difference verification of analytic gradients.

use super::mlp::{Gradients, MlpParams};

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub pass: bool,
    pub checked: usize,
}

/// Compare the analytic gradient of `loss_fn` against central finite
/// differences over every parameter.
///
/// `loss_fn` returns the scalar loss and its analytic parameter gradients;
/// the finite-difference side only ever uses the scalar, so the two routes
/// stay independent.
pub fn grad_check(
    params: &MlpParams,
    loss_fn: impl Fn(&MlpParams) -> (f64, Gradients),
    tolerance: f64,
) -> GradCheckReport {
    let (_, analytic) = loss_fn(params);
    let mut max_rel_error: f64 = 0.0;
    let mut checked = 0usize;

    let n_layers = params.layers.len();
    for l in 0..n_layers {
        let w_len = params.layers[l].weights.data().len();
        for k in 0..w_len {
            let mut plus = params.clone();
            plus.layers[l].weights.data_mut()[k] += FD_STEP;
            let mut minus = params.clone();
            minus.layers[l].weights.data_mut()[k] -= FD_STEP;
            let numeric = (loss_fn(&plus).0 - loss_fn(&minus).0) / (2.0 * FD_STEP);
            let ana = analytic.layers[l].weights.data()[k];
            max_rel_error = max_rel_error.max(rel_error(numeric, ana));
            checked += 1;
        }
        let b_len = params.layers[l].bias.len();
        for k in 0..b_len {
            let mut plus = params.clone();
            plus.layers[l].bias[k] += FD_STEP;
            let mut minus = params.clone();
            minus.layers[l].bias[k] -= FD_STEP;
            let numeric = (loss_fn(&plus).0 - loss_fn(&minus).0) / (2.0 * FD_STEP);
            let ana = analytic.layers[l].bias[k];
            max_rel_error = max_rel_error.max(rel_error(numeric, ana));
            checked += 1;
        }
    }

    GradCheckReport {
        max_rel_error,
        pass: max_rel_error < tolerance,
        checked,
    }
}

/// Finite-difference gradient w.r.t. an arbitrary input vector, for checks
/// that chain through compositions rather than parameters.
pub fn fd_input_gradient(input: &[f64], loss_fn: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0; input.len()];
    let mut probe = input.to_vec();
    for (i, g) in grad.iter_mut().enumerate() {
        let original = probe[i];
        probe[i] = original + FD_STEP;
        let plus = loss_fn(&probe);
        probe[i] = original - FD_STEP;
        let minus = loss_fn(&probe);
        probe[i] = original;
        *g = (plus - minus) / (2.0 * FD_STEP);
    }
    grad
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::loss::cross_entropy;
    use crate::diffnet::matrix::Matrix;
    use crate::diffnet::mlp::{
        backward, forward, Activation, MlpConfig, OutputActivation,
    };
    use crate::util::component_rng;
    use rand::Rng;

    fn random_batch(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn linear_net_weight_gradient_is_input_outer_product() {
        // y = Wx, loss = sum(y): dL/dW[i][j] = x[i], checked against FD.
        let config =
            MlpConfig::new(vec![3, 2], Activation::Relu, OutputActivation::Identity).unwrap();
        let mut rng = component_rng(7, "fd");
        let params = MlpParams::init(&config, &mut rng);
        let batch = random_batch(&mut rng, 1, 3);

        let loss_fn = |p: &MlpParams| {
            let trace = forward(&config, p, &batch).unwrap();
            let loss: f64 = trace.output().data().iter().sum();
            let upstream = Matrix::from_vec(1, 2, vec![1.0, 1.0]);
            let (grads, _) = backward(&config, p, &trace, &upstream).unwrap();
            (loss, grads)
        };
        let report = grad_check(&params, loss_fn, 1e-4);
        assert!(report.pass, "max rel error {}", report.max_rel_error);

        // Structure: dL/dW[i][j] == x[i] exactly for this loss.
        let (_, grads) = loss_fn(&params);
        for i in 0..3 {
            for j in 0..2 {
                assert!((grads.layers[0].weights.get(i, j) - batch.get(0, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deep_mixed_net_passes_grad_check() {
        let config = MlpConfig::new(
            vec![4, 8, 8, 3],
            Activation::Relu,
            OutputActivation::SoftmaxGroups(vec![0..3]),
        )
        .unwrap();
        let mut rng = component_rng(21, "fd2");
        let params = MlpParams::init(&config, &mut rng);
        let batch = random_batch(&mut rng, 5, 4);
        let targets = vec![0usize, 2, 1, 0, 2];

        let loss_fn = |p: &MlpParams| {
            let trace = forward(&config, p, &batch).unwrap();
            let ce = cross_entropy(trace.output(), &targets).unwrap();
            let (grads, _) = backward(&config, p, &trace, &ce.grad).unwrap();
            (ce.loss, grads)
        };
        let report = grad_check(&params, loss_fn, 1e-4);
        assert!(report.pass, "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn corrupted_gradient_fails_check() {
        let config =
            MlpConfig::new(vec![3, 4, 1], Activation::Tanh, OutputActivation::Sigmoid).unwrap();
        let mut rng = component_rng(3, "fd3");
        let params = MlpParams::init(&config, &mut rng);
        let batch = random_batch(&mut rng, 2, 3);

        let loss_fn = |p: &MlpParams| {
            let trace = forward(&config, p, &batch).unwrap();
            let loss: f64 = trace.output().data().iter().sum();
            let upstream = Matrix::from_vec(2, 1, vec![1.0, 1.0]);
            let (mut grads, _) = backward(&config, p, &trace, &upstream).unwrap();
            grads.scale(2.0); // deliberate corruption
            (loss, grads)
        };
        let report = grad_check(&params, loss_fn, 1e-4);
        assert!(!report.pass);
    }

    #[test]
    fn input_gradient_chains_through_frozen_net() {
        // Trainable layer feeding a frozen net: the FD gradient of the whole
        // composition w.r.t. the intermediate must match the frozen net's
        // input gradient.
        let frozen_config =
            MlpConfig::new(vec![3, 5, 1], Activation::Tanh, OutputActivation::Sigmoid).unwrap();
        let mut rng = component_rng(9, "fd4");
        let frozen = MlpParams::init(&frozen_config, &mut rng);
        let intermediate: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss_of = |x: &[f64]| {
            let batch = Matrix::from_vec(1, 3, x.to_vec());
            let trace = forward(&frozen_config, &frozen, &batch).unwrap();
            trace.output().get(0, 0)
        };
        let fd = fd_input_gradient(&intermediate, loss_of);

        let batch = Matrix::from_vec(1, 3, intermediate.clone());
        let trace = forward(&frozen_config, &frozen, &batch).unwrap();
        let upstream = Matrix::from_vec(1, 1, vec![1.0]);
        let (_, input_grad) = backward(&frozen_config, &frozen, &trace, &upstream).unwrap();

        for (a, b) in fd.iter().zip(input_grad.data()) {
            assert!(rel_error(*a, *b) < 1e-4, "fd {a} vs analytic {b}");
        }
    }
}
