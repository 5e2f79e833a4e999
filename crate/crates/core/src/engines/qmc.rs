//! Randomized quasi-Monte Carlo by sequential conditioning.
//!
//! With `S = B y` for standard normal `y` and `B` in lower staircase form (each
//! constraint row involves `y_0..y_j` for some `j` with a nonzero coefficient on
//! `y_j`), the probability of `a <= S <= b` is the expectation of a product of
//! one-dimensional normal masses. The expectation is taken over a Richtmyer
//! lattice with random shifts and the baker's transform.

use super::{BandProbability, Method};
use crate::covariance::{psd_cholesky, repaired_cholesky, PartialSumCovariance};
use crate::error::{Error, Result};
use crate::normal::truncated_draw;
use crate::rng::{stream, Domain};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Largest `N` the QMC engine accepts.
pub const MAX_QMC_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmcConfig {
    /// Lattice points per randomization.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_randomizations")]
    pub randomizations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    4096
}

fn default_randomizations() -> usize {
    16
}

impl Default for QmcConfig {
    fn default() -> Self {
        QmcConfig {
            samples: default_samples(),
            randomizations: default_randomizations(),
            seed: 0,
        }
    }
}

impl QmcConfig {
    pub fn with_seed(seed: u64) -> Self {
        QmcConfig {
            seed,
            ..Self::default()
        }
    }
}

/// Constraints `lower_i <= sum_k rows_i[k] y_k <= upper_i`, grouped by the last
/// variable each row involves.
#[derive(Debug, Clone)]
pub struct Staircase {
    dim: usize,
    /// For each variable `j`: `(coefficients on y_0..=y_j, lower, upper)`.
    groups: Vec<Vec<(Vec<f64>, f64, f64)>>,
}

impl Staircase {
    /// Builds the grouping from dense rows. Coefficients with magnitude at most
    /// `zero_tol` times the row's largest entry count as zero.
    pub fn new(rows: &[Vec<f64>], lower: &[f64], upper: &[f64], zero_tol: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut groups = vec![Vec::new(); dim];
        for ((row, &a), &b) in rows.iter().zip(lower).zip(upper) {
            if row.len() != dim {
                return Err(Error::InvalidArgument("ragged constraint rows".into()));
            }
            let scale = row.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
            match row
                .iter()
                .rposition(|x| x.abs() > zero_tol * scale && *x != 0.0)
            {
                Some(j) => {
                    let coeffs = row[..=j]
                        .iter()
                        .map(|&x| if x.abs() > zero_tol * scale { x } else { 0.0 })
                        .collect();
                    groups[j].push((coeffs, a, b));
                }
                None => {
                    if !(a <= 0.0 && 0.0 <= b) {
                        // a zero row outside its band: probability zero
                        return Ok(Staircase {
                            dim: 0,
                            groups: vec![vec![(vec![], 1.0, -1.0)]],
                        });
                    }
                }
            }
        }
        Ok(Staircase { dim, groups })
    }

    /// Band `|S_n| <= f` for `S = L y` with lower-triangular `L`.
    pub fn from_factor(l: &DMatrix<f64>, f: f64) -> Result<Self> {
        let n = l.nrows();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|k| l[(i, k)]).collect())
            .collect();
        Self::new(&rows, &vec![-f; n], &vec![f; n], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln` of the conditional-mass product at one point, filling `y` along the way.
    fn log_weight(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let mut logp = 0.0;
        let mut wi = 0;
        for (j, group) in self.groups.iter().enumerate() {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for (coeffs, a, b) in group {
                if coeffs.is_empty() {
                    return f64::NEG_INFINITY;
                }
                let c: f64 = coeffs[..j].iter().zip(&y[..j]).map(|(x, v)| x * v).sum();
                let piv = coeffs[j];
                let (mut l, mut h) = ((a - c) / piv, (b - c) / piv);
                if piv < 0.0 {
                    std::mem::swap(&mut l, &mut h);
                }
                lo = lo.max(l);
                hi = hi.min(h);
            }
            let last = j + 1 == self.groups.len();
            let u = if last { 0.5 } else { w[wi] };
            if !last {
                wi += 1;
            }
            let (mass, draw) = truncated_draw(lo, hi, u);
            if !(mass > 0.0) {
                return f64::NEG_INFINITY;
            }
            if group.is_empty() {
                y[j] = crate::normal::quantile(u.clamp(1e-300, 1.0 - 1e-16));
            } else {
                logp += mass.ln();
                y[j] = draw;
            }
        }
        logp
    }
}

/// `ln p` with the standard error of `p / p_hat` from the replicate spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcEstimate {
    pub log_p: f64,
    pub rel_err: f64,
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut k = 2u64;
    while out.len() < count {
        if out
            .iter()
            .take_while(|&&p| p * p <= k)
            .all(|&p| !k.is_multiple_of(p))
        {
            out.push(k);
        }
        k += 1;
    }
    out
}

fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + (s / xs.len() as f64).ln()
}

/// Probability of the staircase constraints.
pub fn staircase_probability(st: &Staircase, cfg: &QmcConfig) -> Result<QmcEstimate> {
    if cfg.samples == 0 || cfg.randomizations < 2 {
        return Err(Error::InvalidArgument(
            "QMC needs at least one sample and two randomizations".into(),
        ));
    }
    if st.dim == 0 {
        let empty = st
            .groups
            .iter()
            .flatten()
            .any(|(c, a, b)| c.is_empty() && a > b);
        let log_p = if empty { f64::NEG_INFINITY } else { 0.0 };
        return Ok(QmcEstimate {
            log_p,
            rel_err: 0.0,
        });
    }
    let points_dim = st.dim - 1;
    let alpha: Vec<f64> = primes(points_dim)
        .iter()
        .map(|&p| (p as f64).sqrt().fract())
        .collect();
    let replicate = |r: usize| -> f64 {
        let mut rng = stream(cfg.seed, Domain::QmcShift, r as u64);
        let shift: Vec<f64> = (0..points_dim).map(|_| rng.random::<f64>()).collect();
        let mut w = vec![0.0; points_dim];
        let mut y = vec![0.0; st.dim];
        let mut logs = Vec::with_capacity(cfg.samples);
        for k in 1..=cfg.samples {
            for ((wi, a), s) in w.iter_mut().zip(&alpha).zip(&shift) {
                let x = (k as f64 * a + s).fract();
                *wi = 1.0 - (2.0 * x - 1.0).abs();
            }
            logs.push(st.log_weight(&w, &mut y));
        }
        log_mean_exp(&logs)
    };
    let reps: Vec<f64> = (0..cfg.randomizations)
        .into_par_iter()
        .map(replicate)
        .collect();
    let top = reps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(QmcEstimate {
            log_p: f64::NEG_INFINITY,
            rel_err: 0.0,
        });
    }
    let scaled: Vec<f64> = reps.iter().map(|l| (l - top).exp()).collect();
    let r = scaled.len() as f64;
    let mean = scaled.iter().sum::<f64>() / r;
    let var = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    Ok(QmcEstimate {
        log_p: top + mean.ln(),
        rel_err: (var / r).sqrt() / mean,
    })
}

/// `P{|X_i| <= half_widths[i] for all i}` for `X ~ N(0, matrix)` of full rank.
pub fn box_probability_qmc(
    matrix: &DMatrix<f64>,
    half_widths: &[f64],
    cfg: &QmcConfig,
) -> Result<QmcEstimate> {
    let n = matrix.nrows();
    if half_widths.len() != n || n == 0 || n > MAX_QMC_DIM {
        return Err(Error::InvalidArgument(format!(
            "box needs one half-width per coordinate and 1 <= dim <= {MAX_QMC_DIM}"
        )));
    }
    let (l, rank) = psd_cholesky(matrix, 1e-10)?;
    if rank < n {
        return Err(Error::DegenerateCovariance);
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|k| l[(i, k)]).collect())
        .collect();
    let lower: Vec<f64> = half_widths.iter().map(|w| -w).collect();
    staircase_probability(&Staircase::new(&rows, &lower, half_widths, 0.0)?, cfg)
}

/// Lower-triangular `B` with `S = B y` for the partial sums with covariance `sigma`.
///
/// The factor is taken on the increment covariance, whose entries stay of order
/// `r(0)`, and then cumulated. Fewer than `N/2` resolved directions means a
/// finite-rank (atomic) law, which is left to the analytic reduction.
fn band_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    let at = |i: usize, j: usize| {
        if i == 0 || j == 0 {
            0.0
        } else {
            sigma[(i - 1, j - 1)]
        }
    };
    let k = DMatrix::from_fn(n, n, |i, j| {
        at(i + 1, j + 1) - at(i, j + 1) - at(i + 1, j) + at(i, j)
    });
    let (mut l, rank) = repaired_cholesky(&k)?;
    if 2 * rank < n {
        return Err(Error::DegenerateCovariance);
    }
    for i in 1..n {
        for c in 0..i {
            l[(i, c)] += l[(i - 1, c)];
        }
    }
    Ok(l)
}

/// `P{max_n |S_n| <= f}` for the partial-sum covariance `sigma`.
pub fn band_probability_qmc(
    sigma: &PartialSumCovariance,
    f: f64,
    cfg: &QmcConfig,
) -> Result<BandProbability> {
    let start = Instant::now();
    let n = sigma.dim();
    if !(f > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "band half-width must be positive, got {f}"
        )));
    }
    if n == 0 || n > MAX_QMC_DIM {
        return Err(Error::InvalidArgument(format!(
            "QMC engine supports 1 <= N <= {MAX_QMC_DIM}, got {n}"
        )));
    }
    let st = Staircase::from_factor(&band_factor(&sigma.matrix)?, f)?;
    let est = staircase_probability(&st, cfg)?;
    Ok(BandProbability::from_log(
        Method::Qmc,
        n,
        f,
        est.log_p,
        est.rel_err,
        cfg.seed,
        start.elapsed(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_primes() {
        assert_eq!(primes(6), vec![2, 3, 5, 7, 11, 13]);
    }

    #[test]
    fn one_dimensional_box_is_exact() {
        let sigma = PartialSumCovariance::from_matrix(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b = band_probability_qmc(&sigma, 1.0, &QmcConfig::default()).unwrap();
        assert!((b.p - 0.682_689_492_137_085_9).abs() < 1e-14);
        assert_eq!(b.err, 0.0);
    }

    #[test]
    fn degenerate_matrix_is_refused() {
        let sigma = PartialSumCovariance::from_matrix(DMatrix::from_element(3, 3, 1.0)).unwrap();
        assert!(matches!(
            band_probability_qmc(&sigma, 1.0, &QmcConfig::default()),
            Err(Error::DegenerateCovariance)
        ));
    }

    #[test]
    fn zero_row_outside_band_has_probability_zero() {
        let st = Staircase::new(&[vec![0.0, 0.0]], &[1.0], &[2.0], 0.0).unwrap();
        let e = staircase_probability(&st, &QmcConfig::default()).unwrap();
        assert_eq!(e.log_p, f64::NEG_INFINITY);
    }
}
