//! Numerical tools for small deviation probabilities
//! `P{max_{n <= N} |S_n| <= f_N}` of partial sums of stationary Gaussian sequences.

pub mod covariance;
pub mod engines;
pub mod error;
pub mod normal;
pub mod properties;
pub mod quadrature;
pub mod rates;
pub mod rng;
pub mod sampler;
pub mod spectral;

pub use error::{Error, Result, ScheduleCondition};
