//! Variational ladder autoencoders with a Gaussian-mixture prior on every latent
//! layer, so that each layer of the hierarchy can be clustered independently.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a tape-based reverse-mode engine over dense tensors.
//! - [`distributions`]: diagonal Gaussians, categoricals, the Concrete relaxation, and
//!   the closed-form divergences of the objective.
//! - [`model`]: the ladder encoder/decoder, the mixture priors, the single-layer
//!   Gaussian-mixture baseline, generation protocols, and checkpoints.
//! - [`training`]: the evidence lower bound, an exact-enumeration oracle, Adam, and the
//!   training loop.
//! - [`evaluation`]: cluster accuracy with optimal assignment.
//! - [`data`]: the synthetic hierarchical-factor dataset, the raw dataset format, and PPM export.
//! - [`cli`]: the `vlac` command-line front end.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod real;
pub mod seeding;
pub mod selfcheck;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use real::{Dtype, Real};
pub use tensor::Tensor;
