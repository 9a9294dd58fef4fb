//! Minimal differentiable-network engine: dense MLPs with explicit
//! forward/backward passes, standard losses, Adam, and finite-difference
//! gradient checking. Double precision throughout; all reductions run in a
//! fixed order, so results are bit-deterministic per seed.

mod adam;
mod gradcheck;
mod loss;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamHyper, OptimizerState};
pub use gradcheck::{fd_input_gradient, grad_check, rel_error, GradCheckReport, FD_STEP};
pub use loss::{bce, cross_entropy, l2_penalty, LossValue, PROB_FLOOR};
pub use matrix::Matrix;
pub use mlp::{
    backward, forward, Activation, ForwardTrace, Gradients, LayerParams, MlpConfig, MlpParams,
    OutputActivation,
};

/// Default hidden stack used by the classifier, discriminators, and
/// autoencoder halves when a config does not say otherwise.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
