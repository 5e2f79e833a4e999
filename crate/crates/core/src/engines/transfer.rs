//! Largest eigenvalue of the Gaussian transfer operator on `[-f, f]`.

use super::{BandProbability, Method};
use crate::error::{Error, Result};
use crate::normal::pdf;
use crate::quadrature::gauss_legendre;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// `c(f) = ln lambda_1`, the per-step decay rate for i.i.d. standard normal steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferRate {
    pub f: f64,
    pub c: f64,
    pub lambda1: f64,
    /// `lambda_2 / lambda_1`, the spectral-gap diagnostic.
    pub gap_ratio: f64,
    pub nodes: usize,
    /// `|ln lambda_1(2 nodes) - ln lambda_1(nodes)|`.
    pub err: f64,
}

fn top_two(f: f64, nodes: usize) -> Result<(f64, f64)> {
    let (x, w) = gauss_legendre(nodes);
    let xs: Vec<f64> = x.iter().map(|t| f * t).collect();
    let sw: Vec<f64> = w.iter().map(|t| (f * t).sqrt()).collect();
    let a = DMatrix::from_fn(nodes, nodes, |i, j| sw[i] * pdf(xs[i] - xs[j]) * sw[j]);
    let eig = SymmetricEigen::try_new(a, 1e-15, 100_000).ok_or(Error::EigenNoConvergence)?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok((ev[0], ev.get(1).copied().unwrap_or(0.0)))
}

/// Nyström discretization of `[R g](x) = int_{-f}^{f} phi(x - y) g(y) dy` on
/// Gauss–Legendre nodes, symmetrized as `sqrt(w_i) phi(x_i - x_j) sqrt(w_j)`.
pub fn transfer_rate(f: f64, nodes: usize) -> Result<TransferRate> {
    if !(f > 0.0) || nodes < 16 {
        return Err(Error::InvalidArgument(format!(
            "transfer operator needs f > 0 and at least 16 nodes, got f = {f}, nodes = {nodes}"
        )));
    }
    let (l1, l2) = top_two(f, nodes)?;
    let (fine, _) = top_two(f, 2 * nodes)?;
    if !(l1 > 0.0 && l1 < 1.0) {
        return Err(Error::EigenNoConvergence);
    }
    Ok(TransferRate {
        f,
        c: l1.ln(),
        lambda1: l1,
        gap_ratio: l2 / l1,
        nodes,
        err: (fine.ln() - l1.ln()).abs(),
    })
}

fn log_band_probability(n: usize, f: f64, nodes: usize) -> f64 {
    let (x, w) = gauss_legendre(nodes);
    let xs: Vec<f64> = x.iter().map(|t| f * t).collect();
    let ws: Vec<f64> = w.iter().map(|t| f * t).collect();
    let k = DMatrix::from_fn(nodes, nodes, |i, j| ws[j] * pdf(xs[i] - xs[j]));
    // u_m(x) = P_x{|x + S_j| <= f, j <= m}, renormalized each step
    let mut u = DVector::from_element(nodes, 1.0);
    let mut log_scale = 0.0;
    for _ in 1..n {
        u = &k * &u;
        let top = u.amax();
        u /= top;
        log_scale += top.ln();
    }
    let start: f64 = (0..nodes).map(|j| ws[j] * pdf(xs[j]) * u[j]).sum();
    log_scale + start.ln()
}

/// `P{max_{n <= N} |S_n| <= f}` for i.i.d. standard normal steps by iterating the
/// discretized transfer operator. `err` compares against `2 nodes`.
pub fn transfer_probability(n: usize, f: f64, nodes: usize) -> Result<BandProbability> {
    let start = Instant::now();
    if !(f > 0.0) || nodes < 16 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "transfer operator needs N >= 1, f > 0 and at least 16 nodes, got N = {n}, f = {f}, nodes = {nodes}"
        )));
    }
    let coarse = log_band_probability(n, f, nodes);
    let fine = log_band_probability(n, f, 2 * nodes);
    Ok(BandProbability::from_log(
        Method::Transfer,
        n,
        f,
        fine,
        (fine - coarse).abs(),
        0,
        start.elapsed(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_too_few_nodes() {
        assert!(transfer_rate(1.0, 8).is_err());
    }

    #[test]
    fn eigenvalue_lies_in_unit_interval() {
        let t = transfer_rate(1.0, 32).unwrap();
        assert!(t.lambda1 > 0.0 && t.lambda1 < 1.0);
        assert!(t.gap_ratio < 1.0);
    }

    #[test]
    fn single_step_is_the_central_mass() {
        let b = transfer_probability(1, 1.5, 32).unwrap();
        assert!((b.p - crate::normal::central_mass(1.5)).abs() < 1e-12);
    }
}
