//! Statistical procedures over immutable `f64` sample sets.
//!
//! Kernels may run in any [`Real`](crate::scalar::Real) type; samples are
//! widened to `f64` before they reach an estimator.

mod ccdf;
mod conductivity;
mod fit;
mod lambda;
mod oracles;
mod passage;
mod stats;
mod tail;

pub use ccdf::EmpiricalCcdf;
pub use conductivity::{bond_flux_summary, fit_inverse_length, thermal_conductivity, BondFluxSummary, FluxLedger};
pub use fit::{fit_exponential_tail, fit_last_decade, fit_polynomial_tail, fit_tail, fit_window, Scale, TailFit, WindowPolicy};
pub use lambda::{compare_with_exponential, lambda_rescaled, LambdaCheck, RateFunction, RateSurface, ReturnSample};
pub use oracles::{beta_participation_cdf, ParticipationDensity, PostCollisionOracle};
pub use passage::{gamma_sup, GammaEstimate, GammaPolicy, ReferenceSet};
pub use stats::{
    chi_square_test, ks_p_value, ks_statistic, linear_fit, mean_stderr, weighted_linear_fit, ChiSquareResult, Histogram, LinearFit,
};
pub use tail::{cdf_tail_exponent, density_tail_exponent, TailExponent};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {needed} samples, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error("fit window: {0}")]
    FitWindow(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("empty input")]
    EmptyInput,
    #[error("undefined: {0}")]
    Undefined(String),
}
