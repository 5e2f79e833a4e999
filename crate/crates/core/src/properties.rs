//! Randomized invariant suites: Gaussian correlation, Anderson monotonicity,
//! log-concavity in `f`, the analytic bound sandwich and sampler agreement.
//!
//! Every suite draws its instances from `Domain::Property` streams, so a suite is a
//! deterministic function of its seed. A trial passes when the inequality holds up to
//! `MARGIN` combined standard errors; `margin` reports the smallest slack in units of
//! that error (negative means violated).

use crate::covariance::CovarianceModel;
use crate::engines::{band_probability_qmc, box_probability_qmc, QmcConfig};
use crate::error::Result;
use crate::rates::{best_regularized_lower_bound, volumetric_upper_bound};
use crate::rng::{stream, Domain};
use crate::sampler::{sample_cholesky, sample_circulant};
use crate::spectral::{Atom, SpectralMeasure};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Allowed violation in combined standard errors.
pub const MARGIN: f64 = 3.0;

/// KS level for the sampler comparison.
const KS_LEVEL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    CorrelationInequality,
    Anderson,
    LogConcavity,
    Sandwich,
    SamplerAgreement,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::CorrelationInequality,
        Suite::Anderson,
        Suite::LogConcavity,
        Suite::Sandwich,
        Suite::SamplerAgreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::CorrelationInequality => "correlation-inequality",
            Suite::Anderson => "anderson",
            Suite::LogConcavity => "log-concavity",
            Suite::Sandwich => "sandwich",
            Suite::SamplerAgreement => "sampler-agreement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_qmc")]
    pub qmc: QmcConfig,
    /// Paths per sampler in the agreement suite.
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> usize {
    12
}

fn default_qmc() -> QmcConfig {
    QmcConfig {
        samples: 2048,
        randomizations: 12,
        seed: 0,
    }
}

fn default_paths() -> usize {
    10_000
}

impl Default for PropertyConfig {
    fn default() -> Self {
        PropertyConfig {
            trials: default_trials(),
            qmc: default_qmc(),
            paths: default_paths(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub instance: String,
    /// Slack in combined standard errors (KS: critical value minus distance, over the critical value).
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub seed: u64,
    pub trials: Vec<Trial>,
    pub pass: bool,
}

impl SuiteResult {
    pub fn worst_margin(&self) -> f64 {
        self.trials
            .iter()
            .map(|t| t.margin)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(lhs - rhs) / err` with the trial verdict.
fn slack(instance: String, lhs: f64, rhs: f64, err: f64) -> Trial {
    let margin = (lhs - rhs) / err.max(1e-12);
    Trial {
        instance,
        margin,
        pass: margin >= -MARGIN,
    }
}

fn trial_rng(cfg: &PropertyConfig, suite: Suite, trial: usize) -> ChaCha8Rng {
    stream(
        cfg.seed,
        Domain::Property,
        ((suite as u64) << 32) | trial as u64,
    )
}

fn qmc_for(cfg: &PropertyConfig, trial: usize) -> QmcConfig {
    QmcConfig {
        seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add(trial as u64),
        ..cfg.qmc
    }
}

/// Autocovariances of a few random atoms plus a flat floor, so the Toeplitz matrix is
/// positive definite.
fn random_toeplitz(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let atoms: Vec<(f64, f64)> = (0..rng.random_range(1..=3))
        .map(|_| (rng.random_range(0.0..PI), rng.random_range(0.1..1.0)))
        .collect();
    let floor = rng.random_range(0.05..0.5);
    let r: Vec<f64> = (0..n)
        .map(|k| {
            let a: f64 = atoms.iter().map(|(u, w)| w * (k as f64 * u).cos()).sum();
            a + if k == 0 { floor } else { 0.0 }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| r[i.abs_diff(j)])
}

fn random_measure(rng: &mut ChaCha8Rng) -> Result<(String, SpectralMeasure)> {
    if rng.random_bool(0.3) {
        return Ok(("iid".into(), SpectralMeasure::white_noise(1.0)?));
    }
    let h = rng.random_range(0.2..0.9);
    Ok((format!("fgn(H={h:.3})"), SpectralMeasure::fgn(h)?))
}

fn correlation_inequality(cfg: &PropertyConfig) -> Result<Vec<Trial>> {
    (0..cfg.trials)
        .map(|t| {
            let mut rng = trial_rng(cfg, Suite::CorrelationInequality, t);
            let n = rng.random_range(2..=6);
            let sigma = random_toeplitz(&mut rng, n);
            let mut idx: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            let split = rng.random_range(1..n);
            let (a1, a2) = idx.split_at(split);
            let (e1, e2) = (rng.random_range(0.2..2.0), rng.random_range(0.2..2.0));
            let mut widths = vec![0.0; n];
            a1.iter().for_each(|&i| widths[i] = e1);
            a2.iter().for_each(|&i| widths[i] = e2);
            let qmc = qmc_for(cfg, t);
            let sub = |set: &[usize], w: f64| {
                let m = DMatrix::from_fn(set.len(), set.len(), |i, j| sigma[(set[i], set[j])]);
                box_probability_qmc(&m, &vec![w; set.len()], &qmc)
            };
            let joint = box_probability_qmc(&sigma, &widths, &qmc)?;
            let (p1, p2) = (sub(a1, e1)?, sub(a2, e2)?);
            let err = (joint.rel_err.powi(2) + p1.rel_err.powi(2) + p2.rel_err.powi(2)).sqrt();
            Ok(slack(
                format!("N={n}, |A1|={split}, eps=({e1:.3},{e2:.3})"),
                joint.log_p,
                p1.log_p + p2.log_p,
                err,
            ))
        })
        .collect()
}

fn anderson(cfg: &PropertyConfig) -> Result<Vec<Trial>> {
    (0..cfg.trials)
        .map(|t| {
            let mut rng = trial_rng(cfg, Suite::Anderson, t);
            let (label, base) = random_measure(&mut rng)?;
            let n = rng.random_range(2..=8);
            let f = rng.random_range(0.3..2.5);
            let (extra, plus) = if rng.random_bool(0.5) {
                let level = rng.random_range(0.01..0.3);
                (format!("{level:.3}*Leb"), base.with_flat(level)?)
            } else {
                let u = rng.random_range(0.0..PI);
                let w = rng.random_range(0.01..0.3);
                let pair = [
                    Atom {
                        frequency: u,
                        weight: w,
                    },
                    Atom {
                        frequency: -u,
                        weight: w,
                    },
                ];
                (format!("atoms(+-{u:.3}, {w:.3})"), base.with_atoms(&pair)?)
            };
            let qmc = qmc_for(cfg, t);
            let p = |m: &SpectralMeasure| {
                let model = CovarianceModel::from_measure(m, n)?;
                band_probability_qmc(&model.partial_sum_covariance(n)?, f, &qmc)
            };
            let (small, large) = (p(&base)?, p(&plus)?);
            Ok(slack(
                format!("{label} + {extra}, N={n}, f={f:.3}"),
                small.log_p,
                large.log_p,
                small.log_err.hypot(large.log_err),
            ))
        })
        .collect()
}

fn log_concavity(cfg: &PropertyConfig) -> Result<Vec<Trial>> {
    (0..cfg.trials)
        .map(|t| {
            let mut rng = trial_rng(cfg, Suite::LogConcavity, t);
            let (label, measure) = random_measure(&mut rng)?;
            let n = rng.random_range(2..=16);
            let f1 = rng.random_range(0.1..1.5);
            let step = rng.random_range(0.1..1.0);
            let model = CovarianceModel::from_measure(&measure, n)?;
            let sigma = model.partial_sum_covariance(n)?;
            let qmc = qmc_for(cfg, t);
            let p: Vec<_> = (0..3)
                .map(|i| band_probability_qmc(&sigma, f1 + i as f64 * step, &qmc))
                .collect::<Result<_>>()?;
            let err = (p[1].log_err.powi(2) + 0.25 * (p[0].log_err.powi(2) + p[2].log_err.powi(2)))
                .sqrt();
            Ok(slack(
                format!("{label}, N={n}, f={f1:.3}+k*{step:.3}"),
                p[1].log_p,
                0.5 * (p[0].log_p + p[2].log_p),
                err,
            ))
        })
        .collect()
}

fn sandwich(cfg: &PropertyConfig) -> Result<Vec<Trial>> {
    (0..cfg.trials)
        .map(|t| {
            let mut rng = trial_rng(cfg, Suite::Sandwich, t);
            let (label, measure) = random_measure(&mut rng)?;
            let n = rng.random_range(1..=64);
            let f = rng.random_range(0.05..1.0);
            let model = CovarianceModel::from_measure(&measure, n)?;
            let p = band_probability_qmc(&model.partial_sum_covariance(n)?, f, &qmc_for(cfg, t))?;
            let upper = volumetric_upper_bound(&model, n, f)?;
            let (lower, _) = best_regularized_lower_bound(&model, n, f)?;
            let below = slack(String::new(), upper, p.log_p, p.log_err);
            let above = slack(String::new(), p.log_p, lower, p.log_err);
            let margin = below.margin.min(above.margin);
            Ok(Trial {
                instance: format!("{label}, N={n}, f={f:.3}"),
                margin,
                pass: below.pass && above.pass,
            })
        })
        .collect()
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at `level` for equal sizes `m`.
pub fn ks_critical(m: usize, level: f64) -> f64 {
    (-(0.5 * level).ln() / 2.0).sqrt() * (2.0 / m as f64).sqrt()
}

fn sampler_agreement(cfg: &PropertyConfig) -> Result<Vec<Trial>> {
    (0..cfg.trials)
        .map(|t| {
            let mut rng = trial_rng(cfg, Suite::SamplerAgreement, t);
            let (label, measure) = random_measure(&mut rng)?;
            let n: usize = rng.random_range(2..=64);
            // the circulant embedding reads the autocovariances up to its half size
            let model = CovarianceModel::from_measure(&measure, 2 * n.next_power_of_two())?;
            let s1: u64 = rng.random();
            let a = sample_circulant(&model, n, cfg.paths, s1)?.max_abs_all();
            let b = sample_cholesky(&model, n, cfg.paths, s1.wrapping_add(1))?.max_abs_all();
            let d = ks_distance(a, b);
            let crit = ks_critical(cfg.paths, KS_LEVEL);
            Ok(Trial {
                instance: format!("{label}, N={n}, KS={d:.4}"),
                margin: (crit - d) / crit,
                pass: d < crit,
            })
        })
        .collect()
}

pub fn run_suite(suite: Suite, cfg: &PropertyConfig) -> Result<SuiteResult> {
    let trials = match suite {
        Suite::CorrelationInequality => correlation_inequality(cfg)?,
        Suite::Anderson => anderson(cfg)?,
        Suite::LogConcavity => log_concavity(cfg)?,
        Suite::Sandwich => sandwich(cfg)?,
        Suite::SamplerAgreement => sampler_agreement(cfg)?,
    };
    for t in trials.iter().filter(|t| !t.pass) {
        log::warn!(
            "{} violated on {} (margin {:.2})",
            suite.name(),
            t.instance,
            t.margin
        );
    }
    Ok(SuiteResult {
        suite,
        seed: cfg.seed,
        pass: trials.iter().all(|t| t.pass),
        trials,
    })
}

pub fn run_all(cfg: &PropertyConfig) -> Result<Vec<SuiteResult>> {
    Suite::ALL.iter().map(|&s| run_suite(s, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_distance_of_shifted_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 50.0).collect();
        assert!((ks_distance(a.clone(), b) - 0.5).abs() < 1e-12);
        assert_eq!(ks_distance(a.clone(), a), 0.0);
    }

    #[test]
    fn random_toeplitz_is_positive_definite() {
        let mut rng = stream(1, Domain::Property, 0);
        for _ in 0..20 {
            let m = random_toeplitz(&mut rng, 6);
            assert!(m.cholesky().is_some());
        }
    }
}
