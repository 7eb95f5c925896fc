//! Cauchy-Rician amplitude statistics for heterogeneous SAR scenes.
//!
//! The amplitude of a complex signal whose real and imaginary parts follow a
//! circular-bivariate Cauchy law with scale `gamma` and unified location
//! `delta` has the closed-form density
//!
//! ```text
//!          2 γ x E(k)
//! f(x) = ---------------------------------- ,   k = √(4xδ / (γ² + (x+δ)²))
//!        π [γ² + (x−δ)²] √(γ² + (x+δ)²)
//! ```
//!
//! where `E` is the complete elliptic integral of the second kind, taking the
//! modulus `k` (not the parameter `m = k²`).
//!
//! The crate provides the density, a seeded sampler, the algebraic-moment
//! estimator, baseline SAR models, KL scoring, the synthetic grid experiment
//! and a command-line front end. The analytic core (special functions,
//! density, moments, estimator) is generic over the scalar type through
//! [`Real`]; the data pipeline (sampling, histograms, I/O) works in `f64`.

// reference coefficients are kept at their published digits; `!(a < b)`
// comparisons deliberately reject NaN
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cauchy_rician;
pub mod error;
pub mod estimation;
pub mod goodness_of_fit;
pub mod io_cli;
pub mod quadrature;
pub mod sampling;
pub mod scalar;
pub mod special_functions;
pub mod summation;

pub use crate::cauchy_rician::{CrParams, MomentConstant};
pub use crate::error::{Error, Result};
pub use crate::estimation::{AMode, MomentPair, ParamEstimate};
pub use crate::scalar::Real;
pub use crate::special_functions::EllipticModulus;

/// Parameters in double precision.
pub type CrParamsF64 = CrParams<f64>;
/// Parameters in single precision.
pub type CrParamsF32 = CrParams<f32>;
/// Moment constant in double precision.
pub type MomentConstantF64 = MomentConstant<f64>;
/// Estimator output in double precision.
pub type ParamEstimateF64 = ParamEstimate<f64>;
/// Empirical moments in double precision.
pub type MomentPairF64 = MomentPair<f64>;
