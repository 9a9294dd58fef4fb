//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mlp::{Gradients, MlpConfig, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamHyper {
            learning_rate,
            ..AdamHyper::default()
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    first: Gradients,
    second: Gradients,
    step: u64,
    pub hyper: AdamHyper,
}

impl OptimizerState {
    pub fn new(config: &MlpConfig, hyper: AdamHyper) -> Self {
        OptimizerState {
            first: Gradients::zeros(config),
            second: Gradients::zeros(config),
            step: 0,
            hyper,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected update, in place. Deterministic.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    if params.layers.len() != grads.layers.len()
        || params.layers.len() != state.first.layers.len()
    {
        return Err(Error::shape(
            params.layers.len().to_string(),
            grads.layers.len().to_string(),
            "adam_step layer count",
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);

    for l in 0..params.layers.len() {
        let g_layer = &grads.layers[l];
        let p_layer = &mut params.layers[l];
        let m_layer = &mut state.first.layers[l];
        let v_layer = &mut state.second.layers[l];

        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = h.beta1 * *m + (1.0 - h.beta1) * g;
            *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
        };

        for ((p, &g), (m, v)) in p_layer
            .weights
            .data_mut()
            .iter_mut()
            .zip(g_layer.weights.data())
            .zip(
                m_layer
                    .weights
                    .data_mut()
                    .iter_mut()
                    .zip(v_layer.weights.data_mut()),
            )
        {
            update(p, g, m, v);
        }
        for ((p, &g), (m, v)) in p_layer
            .bias
            .iter_mut()
            .zip(&g_layer.bias)
            .zip(m_layer.bias.iter_mut().zip(v_layer.bias.iter_mut()))
        {
            update(p, g, m, v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::mlp::{Activation, OutputActivation};

    fn scalar_config() -> MlpConfig {
        MlpConfig::new(vec![1, 1], Activation::Relu, OutputActivation::Identity).unwrap()
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let config = scalar_config();
        let mut params = MlpParams::zeros(&config);
        params.layers[0].weights.set(0, 0, 0.37);
        let grads = Gradients::zeros(&config);
        let mut state = OptimizerState::new(&config, AdamHyper::default());
        for _ in 0..5 {
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        assert_eq!(params.layers[0].weights.get(0, 0), 0.37);
    }

    #[test]
    fn first_step_magnitude_matches_formula() {
        // With g=1: m_hat = v_hat = 1, so the step is -lr / (1 + eps).
        let config = scalar_config();
        let mut params = MlpParams::zeros(&config);
        let mut grads = Gradients::zeros(&config);
        grads.layers[0].weights.set(0, 0, 1.0);
        let mut state = OptimizerState::new(&config, AdamHyper::default());
        adam_step(&mut params, &grads, &mut state).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((params.layers[0].weights.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn trajectories_are_bit_identical() {
        let config = MlpConfig::new(
            vec![2, 3, 1],
            Activation::Tanh,
            OutputActivation::Sigmoid,
        )
        .unwrap();
        let run = || {
            let mut params = MlpParams::init(&config, &mut crate::util::component_rng(1, "a"));
            let mut state = OptimizerState::new(&config, AdamHyper::default());
            for step in 0..20 {
                let mut grads = Gradients::zeros(&config);
                for (i, v) in grads.layers[0].weights.data_mut().iter_mut().enumerate() {
                    *v = ((step * 7 + i) % 5) as f64 * 0.1 - 0.2;
                }
                adam_step(&mut params, &grads, &mut state).unwrap();
            }
            params.fingerprint()
        };
        assert_eq!(run(), run());
    }
}
