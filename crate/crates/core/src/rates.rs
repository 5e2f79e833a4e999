//! Asymptotic predictions and rigorous bounds for `ln P{max_{n <= N} |S_n| <= f_N}`,
//! laid out so engine output and theory share one axis.

use crate::covariance::{szego_integral, toeplitz_logdet, CovarianceModel, LogDetMethod};
use crate::engines::{
    band_probability, band_probability_mc, band_probability_qmc, transfer_rate, BandProbability,
    McConfig, Method, QmcConfig, MAX_QMC_DIM,
};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::sampler::BLOCK;
use crate::spectral::{
    adjoint_slowly_varying, perturbed_measure, DiracCase, HurstParams, PerturbationSchedule,
    SlowlyVaryingFn, SpectralMeasure,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

/// `pi^2 / 8`, the small-ball constant of Brownian motion.
pub const KAPPA_HALF: f64 = PI * PI / 8.0;

/// Results below this log-probability are outside what the exact engines resolve.
pub const DESK_SCALE_LOG_P: f64 = -40.0;

/// The boundary sequence `f_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Boundary {
    Constant {
        f: f64,
    },
    /// `c N^gamma`.
    Power {
        c: f64,
        gamma: f64,
    },
    /// `values[N - 1] = f_N`.
    Table {
        values: Vec<f64>,
    },
}

impl Boundary {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Boundary::Constant { f } => *f > 0.0 && f.is_finite(),
            Boundary::Power { c, gamma } => *c > 0.0 && c.is_finite() && gamma.is_finite(),
            Boundary::Table { values } => {
                !values.is_empty() && values.iter().all(|v| *v > 0.0 && v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "boundary values must be positive and finite: {self:?}"
            )))
        }
    }

    pub fn eval(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "boundary is indexed from N = 1".into(),
            ));
        }
        match self {
            Boundary::Constant { f } => Ok(*f),
            Boundary::Power { c, gamma } => Ok(c * (n as f64).powf(*gamma)),
            Boundary::Table { values } => values.get(n - 1).copied().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "boundary table has {} entries, N = {n} requested",
                    values.len()
                ))
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    ToZero,
    Constant,
    ToInfinitySubScale,
    OutOfTheory,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::ToZero => "to-zero",
            Regime::Constant => "constant",
            Regime::ToInfinitySubScale => "to-infinity-sub-scale",
            Regime::OutOfTheory => "out-of-theory",
        }
    }
}

/// Largest `f_N / (N^H sqrt(ell(1/N)))` still counted as sub-scale.
pub const SUB_SCALE_RATIO: f64 = 0.5;

/// Least-squares slope of `ln f_N` against `ln N` on a log-spaced grid ending at `n`.
pub fn fitted_exponent(boundary: &Boundary, n: usize) -> Result<f64> {
    let lo = (n / 64).max(1);
    if lo == n {
        return Ok(0.0);
    }
    let mut pts = Vec::new();
    for i in 0..8 {
        let m = (lo as f64 * (n as f64 / lo as f64).powf(i as f64 / 7.0)).round() as usize;
        pts.push(((m as f64).ln(), boundary.eval(m.clamp(lo, n))?.ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / 8.0;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / 8.0;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Finite-`N` regime of a boundary, judged at the largest horizon `n`.
pub fn classify_regime(
    boundary: &Boundary,
    hurst: f64,
    ell: &SlowlyVaryingFn,
    n: usize,
) -> Result<Regime> {
    boundary.validate()?;
    let f_n = boundary.eval(n)?;
    if f_n < 0.5 {
        return Ok(Regime::ToZero);
    }
    if f_n <= 2.0 * boundary.eval(1)? {
        return Ok(Regime::Constant);
    }
    let gamma = fitted_exponent(boundary, n)?;
    if gamma <= 0.0 {
        return Ok(Regime::Constant);
    }
    let scale = (n as f64).powf(hurst) * ell.eval(1.0 / n as f64).sqrt();
    if gamma <= hurst + 0.05 && f_n / scale <= SUB_SCALE_RATIO {
        Ok(Regime::ToInfinitySubScale)
    } else {
        Ok(Regime::OutOfTheory)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    FbmRate,
    Szego,
    VolumetricUpper,
    RegularizedLower,
    ConstantLimit,
    DiracExponents,
    Counterexample,
}

impl Theorem {
    pub fn name(&self) -> &'static str {
        match self {
            Theorem::FbmRate => "fbm-rate",
            Theorem::Szego => "szego",
            Theorem::VolumetricUpper => "volumetric-upper",
            Theorem::RegularizedLower => "regularized-lower",
            Theorem::ConstantLimit => "constant-limit",
            Theorem::DiracExponents => "dirac-exponents",
            Theorem::Counterexample => "counterexample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionKind {
    Asymptotic,
    UpperBound,
    LowerBound,
}

/// A predicted `ln P` at one `(N, f_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub theorem: Theorem,
    pub kind: PredictionKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub f: f64,
    pub log_p: f64,
    /// Range of the prediction induced by uncertain constants.
    pub interval: Option<(f64, f64)>,
    /// A universal lower envelope valid in the same regime, when one exists.
    pub lower_envelope: Option<f64>,
    pub regime: Regime,
    pub constants: BTreeMap<String, f64>,
}

/// `kappa_H` with a confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub hurst: f64,
    pub value: f64,
    pub ci: (f64, f64),
    pub rungs: Vec<KappaRung>,
    /// Rungs dropped because `ln p` left desk scale.
    pub truncated: bool,
}

impl KappaEstimate {
    /// `pi^2 / 8` at `H = 1/2`, the only exactly known value.
    pub fn exact_half() -> Self {
        KappaEstimate {
            hurst: 0.5,
            value: KAPPA_HALF,
            ci: (KAPPA_HALF, KAPPA_HALF),
            rungs: Vec::new(),
            truncated: false,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci.1 - self.ci.0)
    }
}

/// `ln P ~ -kappa_H [L(f_N) f_N]^{-1/H} N` in the sub-scale regime.
pub fn fbm_rate(
    hurst: f64,
    ell: &SlowlyVaryingFn,
    boundary: &Boundary,
    n: usize,
    kappa: Option<&KappaEstimate>,
) -> Result<RatePrediction> {
    HurstParams::new(hurst)?;
    let regime = classify_regime(boundary, hurst, ell, n)?;
    if regime != Regime::ToInfinitySubScale {
        return Err(Error::RegimeMismatch {
            regime: regime.name().into(),
        });
    }
    let exact;
    let kappa = match kappa {
        Some(k) => k,
        None if hurst == 0.5 => {
            exact = KappaEstimate::exact_half();
            &exact
        }
        None => {
            return Err(Error::InvalidArgument(format!(
                "kappa_H is not known for H = {hurst}; estimate it first"
            )))
        }
    };
    let f = boundary.eval(n)?;
    let l = adjoint_slowly_varying(ell, hurst, f.max(2.0))?;
    let scale = (l * f).powf(-1.0 / hurst) * n as f64;
    let mut constants = BTreeMap::new();
    constants.insert("kappa".into(), kappa.value);
    constants.insert("L".into(), l);
    Ok(RatePrediction {
        theorem: Theorem::FbmRate,
        kind: PredictionKind::Asymptotic,
        n,
        f,
        log_p: -kappa.value * scale,
        interval: Some((-kappa.ci.1 * scale, -kappa.ci.0 * scale)),
        lower_envelope: None,
        regime,
        constants,
    })
}

/// Controls for [`estimate_kappa`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaConfig {
    #[serde(default = "default_kappa_f")]
    pub f_ladder: Vec<f64>,
    /// Rung `f` is evaluated at `N_1 = ceil(horizon_scale f^{1/H})` and `2 N_1`, so
    /// every rung sees the same number of relaxation times.
    #[serde(default = "default_horizon_scale")]
    pub horizon_scale: f64,
    #[serde(default = "default_kappa_qmc")]
    pub qmc: QmcConfig,
}

fn default_kappa_f() -> Vec<f64> {
    vec![3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
}

fn default_horizon_scale() -> f64 {
    1.0
}

fn default_kappa_qmc() -> QmcConfig {
    QmcConfig {
        samples: 8192,
        ..QmcConfig::default()
    }
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig {
            f_ladder: default_kappa_f(),
            horizon_scale: default_horizon_scale(),
            qmc: default_kappa_qmc(),
        }
    }
}

/// One `f` of the kappa ladder: `rate = -(d ln p / dN) f^{1/H}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaRung {
    pub f: f64,
    pub horizons: (usize, usize),
    pub log_p: (f64, f64),
    pub rate: f64,
    pub err: f64,
}

/// Intercept at `x = 0` of a least-squares polynomial of `degree`, with the
/// standard error propagated from independent `y` errors.
fn intercept(x: &[f64], y: &[f64], err: &[f64], degree: usize) -> (f64, f64) {
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, j| x[i].powi(j as i32));
    let pinv = a.pseudo_inverse(1e-12).expect("nonempty design");
    let row = pinv.row(0);
    let value = row.dot(&DVector::from_column_slice(y).transpose());
    let se = row
        .iter()
        .zip(err)
        .map(|(c, e)| (c * e).powi(2))
        .sum::<f64>()
        .sqrt();
    (value, se)
}

/// Estimates `kappa_H` from FGN band probabilities. Per rung, the slope of `ln p`
/// in `N` removes the boundary-layer constant; the rungs are then extrapolated to
/// `f = inf` by a quadratic in `1/f`. The interval is the quadratic intercept
/// widened by its gap to the linear intercept plus two standard errors.
pub fn estimate_kappa(hurst: f64, cfg: &KappaConfig) -> Result<KappaEstimate> {
    HurstParams::new(hurst)?;
    if !(cfg.horizon_scale > 0.0) || cfg.f_ladder.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::InvalidArgument(
            "kappa ladder needs positive f and horizon scale".into(),
        ));
    }
    let horizons = |f: f64| {
        let n1 = (cfg.horizon_scale * f.powf(1.0 / hurst)).ceil().max(1.0) as usize;
        (n1, 2 * n1)
    };
    let n_max = cfg
        .f_ladder
        .iter()
        .map(|&f| horizons(f).1)
        .max()
        .unwrap_or(0);
    if n_max > MAX_QMC_DIM {
        return Err(Error::InvalidArgument(format!(
            "kappa ladder needs N = {n_max}, beyond the QMC limit {MAX_QMC_DIM}"
        )));
    }
    let model = CovarianceModel::from_measure(&SpectralMeasure::fgn(hurst)?, n_max.max(1))?;
    let rungs: Vec<Option<KappaRung>> = cfg
        .f_ladder
        .par_iter()
        .map(|&f| -> Result<Option<KappaRung>> {
            let (n1, n2) = horizons(f);
            let b2 = band_probability_qmc(&model.partial_sum_covariance(n2)?, f, &cfg.qmc)?;
            if b2.log_p < DESK_SCALE_LOG_P {
                return Ok(None);
            }
            let b1 = band_probability_qmc(&model.partial_sum_covariance(n1)?, f, &cfg.qmc)?;
            let dn = (n2 - n1) as f64;
            let scale = f.powf(1.0 / hurst);
            Ok(Some(KappaRung {
                f,
                horizons: (n1, n2),
                log_p: (b1.log_p, b2.log_p),
                rate: -(b2.log_p - b1.log_p) / dn * scale,
                err: b1.log_err.hypot(b2.log_err) / dn * scale,
            }))
        })
        .collect::<Result<_>>()?;
    let truncated = rungs.iter().any(Option::is_none);
    if truncated {
        log::warn!("kappa ladder truncated: some rungs have ln p below {DESK_SCALE_LOG_P}");
    }
    let rungs: Vec<KappaRung> = rungs.into_iter().flatten().collect();
    if rungs.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "kappa ladder needs at least four desk-scale rungs, {} remain",
            rungs.len()
        )));
    }
    let x: Vec<f64> = rungs.iter().map(|r| 1.0 / r.f).collect();
    let y: Vec<f64> = rungs.iter().map(|r| r.rate).collect();
    let e: Vec<f64> = rungs.iter().map(|r| r.err).collect();
    let (quad, se) = intercept(&x, &y, &e, 2);
    let (lin, _) = intercept(&x, &y, &e, 1);
    let half = (quad - lin).abs() + 2.0 * se;
    Ok(KappaEstimate {
        hurst,
        value: quad,
        ci: (quad - half, quad + half),
        rungs,
        truncated,
    })
}

/// `ln pi + (1/4pi) int ln p`, the per-step constant of the two-term formula.
pub fn szego_constant(measure: &SpectralMeasure) -> Result<f64> {
    let s = szego_integral(measure)?;
    Ok(PI.ln() + 0.5 * (s - (2.0 * PI).ln()))
}

/// `ln P = N ln f_N - N [ln pi + (1/4pi) int ln p] + o(N)` for boundaries tending
/// to zero; `lower_envelope` is `N ln f_N`, the universal first-order bound.
pub fn szego_rate(
    measure: &SpectralMeasure,
    boundary: &Boundary,
    n: usize,
) -> Result<RatePrediction> {
    let hurst = measure.hurst().map_or(0.5, |h| h.hurst());
    let regime = classify_regime(boundary, hurst, &SlowlyVaryingFn::one(), n)?;
    if regime != Regime::ToZero {
        return Err(Error::RegimeMismatch {
            regime: regime.name().into(),
        });
    }
    let c = szego_constant(measure)?;
    let f = boundary.eval(n)?;
    let nf = n as f64;
    let mut constants = BTreeMap::new();
    constants.insert("szego".into(), c);
    Ok(RatePrediction {
        theorem: Theorem::Szego,
        kind: PredictionKind::Asymptotic,
        n,
        f,
        log_p: nf * f.ln() - nf * c,
        interval: None,
        lower_envelope: Some(nf * f.ln()),
        regime,
        constants,
    })
}

/// `N ln(2f) - (N/2) ln(2 pi) - (1/2) ln det K_N`, an upper bound on `ln P`.
pub fn volumetric_upper_bound(model: &CovarianceModel, n: usize, f: f64) -> Result<f64> {
    let logdet = toeplitz_logdet(model, n, LogDetMethod::Levinson)?;
    let nf = n as f64;
    Ok(nf * (2.0 * f).ln() - 0.5 * nf * (2.0 * PI).ln() - 0.5 * logdet)
}

/// Lower bound on `ln P` through the regularized covariance of `mu + delta Lambda`
/// (Lebesgue measure `Lambda`): the box volume times the smallest density value.
pub fn regularized_lower_bound(
    model: &CovarianceModel,
    n: usize,
    f: f64,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let reg = model.regularized(delta);
    let logdet = toeplitz_logdet(&reg, n, LogDetMethod::Levinson)?;
    let nf = n as f64;
    Ok(nf * (2.0 * f).ln() - 0.5 * nf * (2.0 * PI).ln() - 0.5 * logdet - nf * f * f / (PI * delta))
}

/// Best [`regularized_lower_bound`] over `delta` in `{f^2, f, 1, 10}`.
pub fn best_regularized_lower_bound(
    model: &CovarianceModel,
    n: usize,
    f: f64,
) -> Result<(f64, f64)> {
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for delta in [f * f, f, 1.0, 10.0] {
        let b = regularized_lower_bound(model, n, f, delta)?;
        if b > best.0 {
            best = (b, delta);
        }
    }
    Ok(best)
}

/// Ladder estimate of `c(f) = lim (1/N) ln P` for a constant boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRateLimit {
    pub f: f64,
    pub ladder: Vec<BandProbability>,
    /// `(1/N) ln p` per rung.
    pub per_step: Vec<f64>,
    /// Successive differences of `per_step`.
    pub gaps: Vec<f64>,
    /// Slope of `ln p` over the last two rungs.
    pub c_hat: f64,
    pub c_err: f64,
    /// `ln lambda_1` when the measure is white noise of unit variance.
    pub transfer: Option<f64>,
    /// Whether the log-density integral is finite.
    pub kolmogorov: bool,
}

pub fn constant_rate_limit(
    measure: &SpectralMeasure,
    f: f64,
    n_ladder: &[usize],
    cfg: &QmcConfig,
) -> Result<ConstantRateLimit> {
    if n_ladder.len() < 2 || n_ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "N ladder needs at least two increasing rungs".into(),
        ));
    }
    let mut ladder = Vec::new();
    for &n in n_ladder {
        let b = band_probability(measure, n, f, cfg)?;
        if b.log_p < DESK_SCALE_LOG_P {
            log::warn!(
                "constant-boundary ladder stops at N = {n}: ln p = {:.1}",
                b.log_p
            );
            break;
        }
        ladder.push(b);
    }
    if ladder.len() < 2 {
        return Err(Error::InvalidArgument(
            "fewer than two desk-scale rungs".into(),
        ));
    }
    let per_step: Vec<f64> = ladder.iter().map(|b| b.log_p / b.n as f64).collect();
    let gaps = per_step.windows(2).map(|w| w[1] - w[0]).collect();
    let (a, b) = (&ladder[ladder.len() - 2], &ladder[ladder.len() - 1]);
    let dn = (b.n - a.n) as f64;
    let transfer = if measure
        .iid_variance()
        .is_some_and(|v| (v - 1.0).abs() < 1e-12)
    {
        Some(transfer_rate(f, 200)?.c)
    } else {
        None
    };
    let kolmogorov = szego_integral(measure).is_ok();
    let c_hat = (b.log_p - a.log_p) / dn;
    if kolmogorov && c_hat >= 0.0 {
        log::warn!("regular sequence with nonnegative rate estimate {c_hat}");
    }
    Ok(ConstantRateLimit {
        f,
        c_hat,
        c_err: a.log_err.hypot(b.log_err) / dn,
        per_step,
        gaps,
        ladder,
        transfer,
        kolmogorov,
    })
}

/// Fitted `ln p = a + b ln f + c ln N` for one atomic example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracReport {
    pub case: DiracCase,
    /// `(N, f, ln p)`.
    pub points: Vec<(usize, f64, f64)>,
    pub slope_f: f64,
    pub slope_n: f64,
    pub expected: (f64, f64),
    pub pass: bool,
}

pub const DIRAC_TOLERANCE: f64 = 0.1;

pub fn default_dirac_n_ladder() -> Vec<usize> {
    vec![64, 128, 256, 512]
}

pub fn default_dirac_f_ladder() -> Vec<f64> {
    vec![0.025, 0.05, 0.1, 0.2]
}

pub fn dirac_example_check(
    case: DiracCase,
    n_ladder: &[usize],
    f_ladder: &[f64],
    cfg: &QmcConfig,
) -> Result<DiracReport> {
    let measure = SpectralMeasure::dirac(case);
    let grid: Vec<(usize, f64)> = n_ladder
        .iter()
        .flat_map(|&n| f_ladder.iter().map(move |&f| (n, f)))
        .collect();
    if grid.len() < 4 {
        return Err(Error::InvalidArgument(
            "exponent fit needs at least four (N, f) points".into(),
        ));
    }
    let points: Vec<(usize, f64, f64)> = grid
        .par_iter()
        .map(|&(n, f)| Ok((n, f, band_probability(&measure, n, f, cfg)?.log_p)))
        .collect::<Result<_>>()?;
    let a = DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => points[i].1.ln(),
        _ => (points[i].0 as f64).ln(),
    });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.2));
    let coef = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("exponent fit failed: {e}")))?;
    let expected = case.exponents();
    let (slope_f, slope_n) = (coef[1], coef[2]);
    Ok(DiracReport {
        case,
        pass: (slope_f - expected.0).abs() <= DIRAC_TOLERANCE
            && (slope_n - expected.1).abs() <= DIRAC_TOLERANCE,
        points,
        slope_f,
        slope_n,
        expected,
    })
}

/// `C` with `sum_k 2 sqrt 2 sqrt(g~_k) (|xi_k| + |eta_k|) <= C M^{1+H} q^{-1/2} f_N sum_k (|xi_k| + |eta_k|)`
/// for the atom pairs of one schedule level, `g~_k = w_k / |e^{i t_k} - 1|^2`.
pub fn pmq_constant(schedule: &PerturbationSchedule, level: usize) -> Result<f64> {
    schedule.validate()?;
    let lvl = *schedule
        .levels
        .get(level)
        .ok_or_else(|| Error::InvalidArgument(format!("schedule has no level {level}")))?;
    let measure = perturbed_measure(schedule)?;
    let (lo, hi) = schedule.zone(level);
    let g_max = measure
        .atoms()
        .iter()
        .filter(|a| a.frequency >= lo * (1.0 - 1e-12) && a.frequency <= hi)
        .map(|a| a.weight / (4.0 * (0.5 * a.frequency).sin().powi(2)))
        .fold(0.0, f64::max);
    let f_n = schedule.boundary(lvl.n);
    Ok(2.0 * 2f64.sqrt() * g_max.sqrt() * (lvl.q as f64).sqrt()
        / (lvl.m.powf(1.0 + schedule.hurst) * f_n))
}

/// Monte Carlo estimate of `P{C M^{1+H} q^{-1/2} sum_{k<q} (|xi_k| + |eta_k|) <= 1/3}`.
pub fn perturbation_pmq(
    hurst: f64,
    m: f64,
    q: usize,
    c: f64,
    samples: u64,
    seed: u64,
) -> Result<BandProbability> {
    let start = Instant::now();
    HurstParams::new(hurst)?;
    if !(m > 0.0 && c > 0.0) || q == 0 || samples == 0 {
        return Err(Error::InvalidArgument(
            "need M > 0, C > 0, q >= 1 and samples >= 1".into(),
        ));
    }
    let threshold = (q as f64).sqrt() / (3.0 * c * m.powf(1.0 + hurst));
    let per = BLOCK as u64;
    let blocks = samples.div_ceil(per);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, Domain::Perturbation, b);
            let count = per.min(samples - b * per);
            (0..count)
                .filter(|_| {
                    let mut s = 0.0;
                    for _ in 0..2 * q {
                        s += rng.sample::<f64, _>(StandardNormal).abs();
                    }
                    s <= threshold
                })
                .count() as u64
        })
        .sum();
    let total = samples as f64;
    let (p, err, upper) = if hits == 0 {
        (3.0 / total, 0.0, true)
    } else {
        let p = hits as f64 / total;
        (p, (p * (1.0 - p) / total).sqrt(), false)
    };
    Ok(BandProbability {
        method: Method::MonteCarlo,
        n: q,
        f: threshold,
        log_p: p.ln(),
        p,
        err,
        seed,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        log_err: if hits == 0 { 0.0 } else { err / p },
        upper_bound_only: upper,
    })
}

/// `ln p / (f_N^{-1/H} N)` for a perturbed measure and for FGN at the last level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub f: f64,
    pub perturbed: f64,
    pub perturbed_err: f64,
    pub fgn: f64,
    pub fgn_err: f64,
    /// `(perturbed - fgn) / combined error`.
    pub separation: f64,
}

/// Monte Carlo comparison of the perturbed measure of `schedule` with FGN at the
/// last level. The two runs use independent streams (`seed` and `seed + 1`).
///
/// Cells of width `dt` only alias beyond lag `2 pi / dt`, so the two laws differ
/// visibly at desk-scale `N` only for coarse schedules (small `q`, `M` near 1).
pub fn counterexample_check(
    schedule: &PerturbationSchedule,
    cfg: &McConfig,
) -> Result<CounterexampleReport> {
    let last = schedule
        .levels
        .last()
        .ok_or_else(|| Error::InvalidArgument("schedule has no levels".into()))?;
    let n = last.n as usize;
    let f = schedule.boundary(last.n);
    let norm = f.powf(-1.0 / schedule.hurst) * n as f64;
    let run = |measure: &SpectralMeasure, seed: u64| -> Result<BandProbability> {
        let model = CovarianceModel::from_measure(measure, n)?;
        let b = band_probability_mc(&model, n, f, &McConfig { seed, ..*cfg })?;
        if b.upper_bound_only {
            return Err(Error::InvalidArgument(format!(
                "no path stayed in the band at N={n}, f={f}; raise the path count"
            )));
        }
        Ok(b)
    };
    let pert = run(&perturbed_measure(schedule)?, cfg.seed)?;
    let base = run(
        &SpectralMeasure::fgn(schedule.hurst)?,
        cfg.seed.wrapping_add(1),
    )?;
    let (pe, fe) = (pert.log_err / norm, base.log_err / norm);
    let (pr, fr) = (pert.log_p / norm, base.log_p / norm);
    Ok(CounterexampleReport {
        n,
        f,
        perturbed: pr,
        perturbed_err: pe,
        fgn: fr,
        fgn_err: fe,
        separation: (pr - fr) / pe.hypot(fe).max(f64::MIN_POSITIVE),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

/// One line of a prediction-versus-measurement report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub theorem: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub f: f64,
    pub predicted: f64,
    pub measured: f64,
    pub err: f64,
    pub verdict: Verdict,
}

pub const REPORT_HEADER: &str = "theorem,N,f,predicted,measured,err,verdict";

pub fn write_report_csv(rows: &[ReportRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.10e},{:.10e},{:.10e},{:.3e},{}",
            r.theorem, r.n, r.f, r.predicted, r.measured, r.err, r.verdict
        )?;
    }
    Ok(())
}
