//! Reprogram a frozen classifier + autoencoder pipeline to new tabular
//! datasets and tasks.
//!
//! The pipeline trains three base artifacts on a source dataset — a
//! classifier, and the encoder/decoder pair of a variational autoencoder —
//! then freezes them. To transfer to a target dataset whose columns are a
//! subset or superset of the source's, only a fresh encoder is trained: it
//! maps target rows into the latent space of the frozen decoder, so the
//! composite generator emits source-shaped rows that the frozen classifier
//! can score. Realism and fairness constraints enter through two
//! discriminators: one judging the generated values of the columns both
//! datasets share, one trying to recover the protected attribute from the
//! generated data.
//!
//! Modules follow the pipeline stages:
//!
//! - [`tabular`]: schemas, datasets, encoding, alignment, synthetic data
//! - [`diffnet`]: dense networks with explicit forward/backward passes
//! - [`classifier`]: the frozen base classifier
//! - [`vae`]: the variational autoencoder whose decoder is reused
//! - [`reprogram`]: the transfer itself (generator + discriminators)
//! - [`metrics`]: histogram realism checks, fairness probes, reports
//! - [`harness`]: scenarios, sweeps, and the command-line interface

pub mod error;
pub mod util;

pub mod classifier;
pub mod diffnet;
pub mod harness;
pub mod metrics;
pub mod reprogram;
pub mod tabular;
pub mod vae;

mod book;

pub use error::{Error, Result};
