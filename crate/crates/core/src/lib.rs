//! Training under multiplicative noise, scale-mixture analysis, and
//! posterior-moment weight pruning for small dense networks.
//!
//! The pipeline this crate serves end to end:
//!
//! 1. Train a dense network with per-unit multiplicative noise
//!    (dropout-style Bernoulli, or Gaussian/Beta/constant) injected into
//!    every inner product ([`network`], [`noise`]).
//! 2. Switch to stochastic-gradient Langevin dynamics with a Gaussian
//!    prior and accumulate per-weight posterior means and variances
//!    ([`posterior`]).
//! 3. Score and prune weights from those moments — signal-to-noise,
//!    signal-plus-robustness, or plain magnitude — and sweep pruning
//!    fractions against a test metric ([`pruning`]).
//! 4. Compare against a smaller student retrained on the full network's
//!    soft targets ([`distill`]).
//!
//! The [`gsm`] module carries the analysis half: closed-form penalties for
//! noisy linear and logistic regression, the equivalence between the
//! product and hierarchical scale-mixture parameterizations, and EM
//! updates for the per-unit noise scales.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the aliases below pin the default `f64` precision
//! used everywhere in practice.

pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod gsm;
pub mod network;
pub mod noise;
pub mod numerics;
pub mod posterior;
pub mod pruning;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default-precision (f64) aliases for the core types.
pub type Matrix = numerics::matrix::Matrix<f64>;
pub type Network = network::Network<f64>;
pub type Dataset = data::Dataset<f64>;
pub type LambdaField = noise::LambdaField<f64>;
pub type PosteriorMoments = posterior::PosteriorMoments<f64>;
pub type RowMoments = gsm::RowMoments<f64>;

/// Single-precision aliases, for callers that trade precision for memory.
pub type Matrix32 = numerics::matrix::Matrix<f32>;
pub type Network32 = network::Network<f32>;
pub type Dataset32 = data::Dataset<f32>;

pub use numerics::rng::RngState;
