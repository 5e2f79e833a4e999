//! Band probability engines for `P{max_{n <= N} |S_n| <= f}`.

mod mc;
mod qmc;
mod reduction;
mod transfer;

pub use mc::{band_probability_mc, McConfig};
pub use qmc::{
    band_probability_qmc, box_probability_qmc, staircase_probability, QmcConfig, QmcEstimate,
    Staircase, MAX_QMC_DIM,
};
pub use reduction::{atomic_staircase, band_probability_reduction};
pub use transfer::{transfer_probability, transfer_rate, TransferRate};

use crate::covariance::CovarianceModel;
use crate::error::Result;
use crate::spectral::SpectralMeasure;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Qmc,
    MonteCarlo,
    Reduction,
    Transfer,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Qmc => "qmc",
            Method::MonteCarlo => "monte-carlo",
            Method::Reduction => "reduction",
            Method::Transfer => "transfer",
        }
    }
}

/// A band probability estimate. `err` is the standard error of `p`; for
/// one-sided Monte Carlo results `p` is a 95% upper confidence bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandProbability {
    pub method: Method,
    #[serde(rename = "N")]
    pub n: usize,
    pub f: f64,
    pub log_p: f64,
    pub p: f64,
    pub err: f64,
    pub seed: u64,
    pub wall_time_ms: f64,
    /// Standard error of `log_p` (delta method, `err / p`).
    pub log_err: f64,
    /// Set when no path stayed in the band and `p` is only an upper bound.
    #[serde(default)]
    pub upper_bound_only: bool,
}

impl BandProbability {
    fn from_log(
        method: Method,
        n: usize,
        f: f64,
        log_p: f64,
        log_err: f64,
        seed: u64,
        elapsed: std::time::Duration,
    ) -> Self {
        let p = log_p.exp();
        BandProbability {
            method,
            n,
            f,
            log_p,
            p,
            err: p * log_err,
            seed,
            wall_time_ms: elapsed.as_secs_f64() * 1e3,
            log_err,
            upper_bound_only: false,
        }
    }
}

/// Exact-engine dispatch: analytic reduction for purely atomic measures, QMC on
/// the partial-sum covariance otherwise.
pub fn band_probability(
    measure: &SpectralMeasure,
    n: usize,
    f: f64,
    cfg: &QmcConfig,
) -> Result<BandProbability> {
    if measure.is_purely_atomic() {
        return band_probability_reduction(measure, n, f, cfg);
    }
    let model = CovarianceModel::from_measure(measure, n)?;
    band_probability_qmc(&model.partial_sum_covariance(n)?, f, cfg)
}
