//! Loss functions. Each returns the scalar loss together with the gradient
//! w.r.t. its direct input, ready to feed `backward` as the upstream
//! gradient.

use crate::error::{Error, Result};

use super::matrix::Matrix;
use super::mlp::{Gradients, MlpParams};

/// Probabilities below this are clamped so losses stay finite.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LossValue {
    pub loss: f64,
    /// dLoss/d(input), same shape as the input.
    pub grad: Matrix,
    /// True if any probability hit the clamp floor.
    pub clamped: bool,
}

/// Mean negative log-likelihood of the target class.
///
/// `probabilities` rows must sum to 1 within 1e-6 (the softmax head
/// guarantees this). The gradient is w.r.t. the probabilities; chaining it
/// through a softmax head happens in `backward`.
pub fn cross_entropy(probabilities: &Matrix, targets: &[usize]) -> Result<LossValue> {
    if probabilities.rows() != targets.len() {
        return Err(Error::shape(
            probabilities.rows().to_string(),
            targets.len().to_string(),
            "cross_entropy target count",
        ));
    }
    for i in 0..probabilities.rows() {
        let sum: f64 = probabilities.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::shape(
                "1.0",
                sum.to_string(),
                "cross_entropy probability row sum",
            ));
        }
    }
    let n = probabilities.rows() as f64;
    let mut grad = Matrix::zeros(probabilities.rows(), probabilities.cols());
    let mut loss = 0.0;
    let mut clamped = false;
    for (i, &t) in targets.iter().enumerate() {
        if t >= probabilities.cols() {
            return Err(Error::shape(
                probabilities.cols().to_string(),
                t.to_string(),
                "cross_entropy target index",
            ));
        }
        let p = probabilities.get(i, t);
        let p_safe = if p < PROB_FLOOR {
            clamped = true;
            PROB_FLOOR
        } else {
            p
        };
        loss += -p_safe.ln();
        grad.set(i, t, -1.0 / (p_safe * n));
    }
    Ok(LossValue {
        loss: loss / n,
        grad,
        clamped,
    })
}

/// Mean binary cross-entropy of scores in (0, 1) against targets in [0, 1].
///
/// Soft targets are allowed; the generator's confusion objective against the
/// fairness discriminator uses a 0.5 target.
pub fn bce(scores: &Matrix, targets: &[f64]) -> Result<LossValue> {
    if scores.cols() != 1 || scores.rows() != targets.len() {
        return Err(Error::shape(
            format!("{}x1", targets.len()),
            format!("{}x{}", scores.rows(), scores.cols()),
            "bce shapes",
        ));
    }
    let n = targets.len() as f64;
    let mut grad = Matrix::zeros(scores.rows(), 1);
    let mut loss = 0.0;
    let mut clamped = false;
    for (i, &t) in targets.iter().enumerate() {
        let raw = scores.get(i, 0);
        let s = raw.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        if s != raw {
            clamped = true;
        }
        loss += -(t * s.ln() + (1.0 - t) * (1.0 - s).ln());
        grad.set(i, 0, (-t / s + (1.0 - t) / (1.0 - s)) / n);
    }
    Ok(LossValue {
        loss: loss / n,
        grad,
        clamped,
    })
}

/// lambda * sum of squared weights (biases excluded); gradient 2*lambda*w.
pub fn l2_penalty(params: &MlpParams, lambda: f64) -> Result<(f64, Gradients)> {
    if lambda < 0.0 {
        return Err(Error::Config(vec![format!(
            "l2 coefficient must be nonnegative, got {lambda}"
        )]));
    }
    let mut grads = Gradients::zeros_like(params);
    let mut total = 0.0;
    for (layer, grad) in params.layers.iter().zip(&mut grads.layers) {
        for (&w, g) in layer.weights.data().iter().zip(grad.weights.data_mut()) {
            total += w * w;
            *g = 2.0 * lambda * w;
        }
    }
    Ok((lambda * total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_perfect_prediction_is_zero() {
        let p = Matrix::from_rows(&[vec![0.0, 1.0]]);
        let out = cross_entropy(&p, &[1]).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn cross_entropy_uniform_is_ln2() {
        let p = Matrix::from_rows(&[vec![0.5, 0.5]]);
        let out = cross_entropy(&p, &[0]).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_09_closed_form() {
        let p = Matrix::from_rows(&[vec![0.9, 0.1]]);
        let out = cross_entropy(&p, &[0]).unwrap();
        assert!((out.loss - (-(0.9f64).ln())).abs() < 1e-12);
        assert!((out.loss - 0.1053605).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_clamps_and_flags() {
        let p = Matrix::from_rows(&[vec![0.0, 1.0]]);
        let out = cross_entropy(&p, &[0]).unwrap();
        assert!(out.clamped);
        assert!((out.loss - (-PROB_FLOOR.ln())).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_unnormalized_rows() {
        let p = Matrix::from_rows(&[vec![0.9, 0.9]]);
        assert!(cross_entropy(&p, &[0]).is_err());
    }

    #[test]
    fn bce_half_score_is_ln2() {
        let s = Matrix::from_rows(&[vec![0.5]]);
        for t in [0.0, 1.0] {
            let out = bce(&s, &[t]).unwrap();
            assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_confident_correct_is_zero() {
        let s = Matrix::from_rows(&[vec![1.0]]);
        let out = bce(&s, &[1.0]).unwrap();
        assert!(out.loss < 1e-11);
    }

    #[test]
    fn bce_confident_wrong_hits_clamp_boundary() {
        let s = Matrix::from_rows(&[vec![PROB_FLOOR]]);
        let out = bce(&s, &[1.0]).unwrap();
        // -ln(1e-12) = 12 ln 10
        assert!((out.loss - 27.631021).abs() < 1e-4);
    }

    #[test]
    fn l2_zero_coefficient_is_zero() {
        let params = MlpParams {
            layers: vec![LayerParamsFixture::single(3.0)],
        };
        let (loss, grads) = l2_penalty(&params, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn l2_single_weight_closed_form() {
        let params = MlpParams {
            layers: vec![LayerParamsFixture::single(3.0)],
        };
        let (loss, grads) = l2_penalty(&params, 1.0).unwrap();
        assert_eq!(loss, 9.0);
        assert_eq!(grads.layers[0].weights.get(0, 0), 6.0);
        // Biases are excluded.
        assert_eq!(grads.layers[0].bias[0], 0.0);
    }

    #[test]
    fn l2_matches_direct_summation() {
        use crate::util::component_rng;
        use rand::Rng;
        let mut rng = component_rng(2, "l2");
        let mut weights = Matrix::zeros(4, 5);
        for v in weights.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let brute: f64 = weights.data().iter().map(|w| w * w).sum();
        let params = MlpParams {
            layers: vec![super::super::mlp::LayerParams {
                weights,
                bias: vec![1.0; 5],
            }],
        };
        let (loss, _) = l2_penalty(&params, 0.7).unwrap();
        assert!((loss - 0.7 * brute).abs() < 1e-9);
    }

    struct LayerParamsFixture;
    impl LayerParamsFixture {
        fn single(w: f64) -> super::super::mlp::LayerParams {
            super::super::mlp::LayerParams {
                weights: Matrix::from_vec(1, 1, vec![w]),
                bias: vec![1.0],
            }
        }
    }
}
