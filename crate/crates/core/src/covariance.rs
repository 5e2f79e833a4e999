//! Autocovariances, Toeplitz and partial-sum covariance matrices, log-determinants
//! and variance diagnostics.

use crate::error::{Error, Result};
use crate::quadrature::{integrate_breaks, uniform_breaks, Rule};
use crate::spectral::{DensityTerm, EllFamily, HurstParams, SlowlyVaryingFn, SpectralMeasure};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::io::Write;

/// Tolerance for [`autocovariance`].
pub const AUTOCOV_TOL: f64 = 1e-8;

const RULE_ORDER: usize = 16;

/// `E xi_0 xi_k` for unit-variance fractional Gaussian noise.
///
/// Written as `k^{2H}/2 * [(1 + 1/k)^{2H} - 1 + (1 - 1/k)^{2H} - 1]` so that the
/// second difference does not cancel catastrophically for large `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    match k {
        0 => 1.0,
        _ if hurst == 0.5 => 0.0,
        1 => 0.5 * (2f64.powf(2.0 * hurst) - 2.0),
        _ => {
            let kf = k as f64;
            let h2 = 2.0 * hurst;
            let up = (h2 * (1.0 / kf).ln_1p()).exp_m1();
            let down = (h2 * (-1.0 / kf).ln_1p()).exp_m1();
            0.5 * kf.powf(h2) * (up + down)
        }
    }
}

/// `r(k)` by adaptive quadrature of the spectral representation.
///
/// Fails with [`Error::QuadratureTolerance`] if `1e-8` is not reached.
pub fn autocovariance(measure: &SpectralMeasure, k: usize) -> Result<f64> {
    let kf = k as f64;
    let atoms: f64 = measure
        .atoms()
        .iter()
        .map(|a| a.weight * (kf * a.frequency).cos())
        .sum();
    let dens = measure.integrate_density(|u| (kf * u).cos(), kf, AUTOCOV_TOL)?;
    if dens.error > AUTOCOV_TOL {
        return Err(Error::QuadratureTolerance {
            achieved: dens.error,
            requested: AUTOCOV_TOL,
        });
    }
    Ok(atoms + dens.value)
}

/// Weighted nodes `c_i` at `u_i` with `int cos(ku) p(u) du ~ sum_i c_i cos(k u_i)`
/// for the parts of the density that have no closed form.
struct CosineRule {
    nodes: Vec<f64>,
    coeffs: Vec<f64>,
}

impl CosineRule {
    fn push(&mut self, rule: &Rule, sign: f64, density: impl Fn(f64) -> f64) {
        for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
            let c = sign * 2.0 * w * density(u);
            if c != 0.0 {
                self.nodes.push(u);
                self.coeffs.push(c);
            }
        }
    }

    fn eval(&self, k: usize) -> f64 {
        let kf = k as f64;
        self.nodes
            .iter()
            .zip(&self.coeffs)
            .map(|(&u, &c)| c * (kf * u).cos())
            .sum()
    }
}

/// Autocovariance sequence `r(0..=k_max)` with the partial-sum variances it implies.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    label: String,
    hurst: Option<f64>,
    source: Option<SpectralMeasure>,
    r: Vec<f64>,
    variances: Vec<f64>,
}

impl CovarianceModel {
    /// Builds `r(0..=k_max)` from a spectral measure.
    ///
    /// Unmodulated FGN and flat terms use their closed forms, with zone
    /// contributions subtracted by composite Gauss–Legendre; modulated FGN terms use
    /// a rule graded toward the origin. Panels are at most `2 / k_max` wide, so each
    /// holds well under a period of `cos(k_max u)`.
    pub fn from_measure(measure: &SpectralMeasure, k_max: usize) -> Result<Self> {
        let width = (2.0 / k_max.max(1) as f64).min(0.25);
        let mut closed = vec![0.0; k_max + 1];
        let mut numeric = CosineRule {
            nodes: Vec::new(),
            coeffs: Vec::new(),
        };
        let hurst = measure.hurst();
        let mut zone_rule = Rule::default();
        for &(a, b) in measure.zones() {
            zone_rule.push_composite(a, b, width, RULE_ORDER);
        }
        for term in measure.density_terms() {
            match *term {
                DensityTerm::Flat { level } => {
                    closed[0] += 2.0 * PI * level;
                    for (k, rk) in closed.iter_mut().enumerate() {
                        for &(a, b) in measure.zones() {
                            *rk -= if k == 0 {
                                2.0 * level * (b - a)
                            } else {
                                let kf = k as f64;
                                2.0 * level * ((kf * b).sin() - (kf * a).sin()) / kf
                            };
                        }
                    }
                }
                DensityTerm::Fgn { scale } => {
                    let params = hurst.expect("validated: fgn term has H");
                    let p = |u: f64| {
                        scale
                            * crate::spectral::fgn_spectral_density(
                                &params,
                                u,
                                crate::spectral::DEFAULT_TRUNCATION,
                            )
                            .unwrap_or(f64::NAN)
                    };
                    match measure.ell_family() {
                        EllFamily::One => {
                            for (k, rk) in closed.iter_mut().enumerate() {
                                *rk += scale * fgn_autocovariance(params.hurst(), k);
                            }
                            numeric.push(&zone_rule, -1.0, p);
                        }
                        ell @ EllFamily::LogPower { .. } => {
                            let ell = SlowlyVaryingFn::from_family(ell)?;
                            let rule = support_rule(measure, width, &params);
                            numeric.push(&rule, 1.0, |u| p(u) * ell.eval(u / (2.0 * PI)));
                        }
                    }
                }
            }
        }
        if numeric.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::QuadratureTolerance {
                achieved: f64::INFINITY,
                requested: AUTOCOV_TOL,
            });
        }
        let atoms = measure.atoms();
        let r: Vec<f64> = (0..=k_max)
            .into_par_iter()
            .map(|k| {
                let kf = k as f64;
                let a: f64 = atoms
                    .iter()
                    .map(|a| a.weight * (kf * a.frequency).cos())
                    .sum();
                closed[k] + numeric.eval(k) + a
            })
            .collect();
        let mut model = Self::from_autocovariances(measure.label(), r)?;
        model.hurst = hurst.map(|h| h.hurst());
        model.source = Some(measure.clone());
        Ok(model)
    }

    /// Model from an explicit autocovariance sequence `r(0..=k_max)`.
    pub fn from_autocovariances(label: impl Into<String>, r: Vec<f64>) -> Result<Self> {
        if r.is_empty() || !(r[0] > 0.0) {
            return Err(Error::InvalidArgument("r(0) must be positive".into()));
        }
        let r0 = r[0];
        if let Some(k) = r
            .iter()
            .position(|x| !x.is_finite() || x.abs() > r0 * (1.0 + 1e-9))
        {
            return Err(Error::InvalidArgument(format!(
                "|r({k})| = {} exceeds r(0) = {r0}",
                r[k]
            )));
        }
        let variances = partial_sum_variances(&r);
        Ok(CovarianceModel {
            label: label.into(),
            hurst: None,
            source: None,
            r,
            variances,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn hurst(&self) -> Option<f64> {
        self.hurst
    }

    pub fn source(&self) -> Option<&SpectralMeasure> {
        self.source.as_ref()
    }

    pub fn k_max(&self) -> usize {
        self.r.len() - 1
    }

    /// Longest horizon `N` whose covariances are available.
    pub fn max_horizon(&self) -> usize {
        self.r.len()
    }

    pub fn autocovariances(&self) -> &[f64] {
        &self.r
    }

    pub fn r(&self, k: usize) -> Result<f64> {
        self.r.get(k).copied().ok_or(Error::HorizonTooShort {
            needed: k,
            available: self.k_max(),
        })
    }

    fn check_horizon(&self, n: usize) -> Result<()> {
        if n > self.max_horizon() {
            return Err(Error::HorizonTooShort {
                needed: n - 1,
                available: self.k_max(),
            });
        }
        Ok(())
    }

    /// Model of the sequence plus independent white noise of spectral level `delta`.
    pub fn regularized(&self, delta: f64) -> Self {
        let mut r = self.r.clone();
        r[0] += 2.0 * PI * delta;
        CovarianceModel {
            label: format!("{} + {delta}*Leb", self.label),
            hurst: self.hurst,
            source: None,
            variances: partial_sum_variances(&r),
            r,
        }
    }

    /// `E S_n^2` for `n = 0..=N`.
    pub fn partial_sum_variances(&self, n: usize) -> Result<&[f64]> {
        self.check_horizon(n)?;
        Ok(&self.variances[..=n])
    }

    /// `N x N` Toeplitz matrix `K_N = (r(|i - j|))`.
    pub fn toeplitz(&self, n: usize) -> Result<DMatrix<f64>> {
        self.check_horizon(n)?;
        Ok(DMatrix::from_fn(n, n, |i, j| self.r[i.abs_diff(j)]))
    }

    /// `Sigma_{n,m} = E S_n S_m` for `1 <= n, m <= N`.
    pub fn partial_sum_covariance(&self, n: usize) -> Result<PartialSumCovariance> {
        self.check_horizon(n)?;
        let v = &self.variances;
        let matrix = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (i + 1, j + 1);
            0.5 * (v[a] + v[b] - v[a.abs_diff(b)])
        });
        Ok(PartialSumCovariance {
            matrix,
            label: self.label.clone(),
        })
    }

    /// Smallest eigenvalue of `K_N`.
    pub fn min_eigenvalue(&self, n: usize) -> Result<f64> {
        let k = self.toeplitz(n)?;
        let eig = SymmetricEigen::try_new(k, 1e-14, 10_000).ok_or(Error::EigenNoConvergence)?;
        Ok(eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min))
    }

    /// Checks `K_N` is positive semidefinite up to `-1e-10 r(0)`.
    pub fn check_psd(&self, n: usize) -> Result<()> {
        let lam = self.min_eigenvalue(n)?;
        if lam < -1e-10 * self.r[0] {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: lam });
        }
        if lam < 0.0 {
            log::warn!("K_{n} has eigenvalue {lam:e}; treated as 0");
        }
        Ok(())
    }

    /// Writes `k,r` rows behind a commented header.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "# label={}, H={}, N={}",
            self.label,
            fmt_opt(self.hurst),
            self.r.len()
        )?;
        writeln!(w, "k,r")?;
        for (k, r) in self.r.iter().enumerate() {
            writeln!(w, "{k},{r:.17e}")?;
        }
        Ok(())
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |h| h.to_string())
}

/// Rule over the support of the density, graded toward `u = 0`.
fn support_rule(measure: &SpectralMeasure, width: f64, params: &HurstParams) -> Rule {
    let mut rule = Rule::default();
    for (lo, hi) in measure.density_support() {
        if lo == 0.0 {
            rule.push_graded_at_zero(hi, width, RULE_ORDER, params.regularizing_exponent());
        } else {
            rule.push_composite(lo, hi, width, RULE_ORDER);
        }
    }
    rule
}

/// `V(n) = E S_n^2` from `V(n) = V(n-1) + 2 sum_{k<n} r(k) - r(0)`, compensated.
fn partial_sum_variances(r: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(r.len() + 1);
    v.push(0.0);
    let (mut c, mut c_comp) = (0.0, 0.0);
    let (mut s, mut s_comp) = (0.0, 0.0);
    for n in 1..=r.len() {
        neumaier_add(&mut c, &mut c_comp, r[n - 1]);
        let step = 2.0 * (c + c_comp) - r[0];
        neumaier_add(&mut s, &mut s_comp, step);
        v.push(s + s_comp);
    }
    v
}

fn neumaier_add(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Covariance matrix of `(S_1, ..., S_N)`.
#[derive(Debug, Clone)]
pub struct PartialSumCovariance {
    pub matrix: DMatrix<f64>,
    pub label: String,
}

impl PartialSumCovariance {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument("covariance must be square".into()));
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
                if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(1.0) {
                    return Err(Error::InvalidArgument(
                        "covariance must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(PartialSumCovariance {
            matrix,
            label: "explicit".into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Covariance of the sub-vector indexed by `idx`.
    pub fn select(&self, idx: &[usize]) -> PartialSumCovariance {
        PartialSumCovariance {
            matrix: DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])]),
            label: format!("{} (selected)", self.label),
        }
    }

    pub fn write_csv(&self, mut w: impl Write, hurst: Option<f64>) -> Result<()> {
        let n = self.dim();
        writeln!(w, "# label={}, H={}, N={n}", self.label, fmt_opt(hurst))?;
        let header: Vec<String> = (1..=n).map(|m| format!("S{m}")).collect();
        writeln!(w, "n,{}", header.join(","))?;
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| format!("{:.17e}", self.matrix[(i, j)]))
                .collect();
            writeln!(w, "{},{}", i + 1, row.join(","))?;
        }
        Ok(())
    }
}

/// Lower-triangular `L` with `L L^T = a` for positive semidefinite `a`.
///
/// Pivots below `tol * max diag` are treated as zero and their column is left
/// empty, so rank-deficient matrices (purely atomic measures) factor exactly.
/// Returns the factor and the numerical rank.
pub fn psd_cholesky(a: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, usize)> {
    let n = a.nrows();
    let scale = (0..n)
        .map(|i| a[(i, i)])
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut l = DMatrix::zeros(n, n);
    let mut rank = 0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol * scale {
            return Err(Error::NotPositiveSemidefinite { eigenvalue: d });
        }
        if d <= tol * scale {
            continue;
        }
        let piv = d.sqrt();
        l[(j, j)] = piv;
        rank += 1;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / piv;
        }
    }
    Ok((l, rank))
}

/// Relative pivot size below which [`repaired_cholesky`] treats a direction as null.
pub const PIVOT_TOL: f64 = 1e-10;

/// Cholesky factor of a covariance matrix that may be singular.
///
/// Exactly low-rank matrices (atomic measures) are factored with empty columns.
/// When the semidefinite factorization does not reproduce the matrix, which
/// happens once roundoff makes a nearly singular matrix indefinite (densities
/// vanishing on an interval), a diagonal jitter of at most `PIVOT_TOL` times the
/// largest variance is added instead. Returns the factor and its rank.
pub fn repaired_cholesky(k: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let n = k.nrows();
    let scale = (0..n)
        .map(|i| k[(i, i)])
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    if let Ok((l, rank)) = psd_cholesky(k, PIVOT_TOL) {
        if rank == n || (&l * l.transpose() - k).amax() <= 1e3 * PIVOT_TOL * scale {
            return Ok((l, rank));
        }
    }
    let eig = SymmetricEigen::try_new(k.clone(), 1e-14, 10_000).ok_or(Error::EigenNoConvergence)?;
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -PIVOT_TOL * scale {
        return Err(Error::NotPositiveSemidefinite { eigenvalue: min });
    }
    let jitter = (PIVOT_TOL * scale).max(-2.0 * min);
    log::warn!("covariance is singular up to roundoff (smallest eigenvalue {min:e}); adding jitter {jitter:e}");
    let mut kj = k.clone();
    for i in 0..n {
        kj[(i, i)] += jitter;
    }
    psd_cholesky(&kj, 0.0)
}

/// `E S_n S_m` straight from the spectral measure, with kernel
/// `cos((n-m)u/2) sin(nu/2) sin(mu/2) / sin^2(u/2)`.
pub fn partial_sum_covariance_spectral(
    measure: &SpectralMeasure,
    n: usize,
    m: usize,
) -> Result<f64> {
    let (nf, mf) = (n as f64, m as f64);
    let kernel = move |u: f64| {
        let s = (0.5 * u).sin();
        if s.abs() < 1e-300 {
            return nf * mf;
        }
        (0.5 * (nf - mf) * u).cos() * (0.5 * nf * u).sin() * (0.5 * mf * u).sin() / (s * s)
    };
    let atoms: f64 = measure
        .atoms()
        .iter()
        .map(|a| a.weight * kernel(a.frequency))
        .sum();
    let scale = nf * mf;
    let dens = measure.integrate_density(kernel, nf.max(mf), 1e-10 * scale.max(1.0))?;
    Ok(atoms + dens.value)
}

/// Method for [`toeplitz_logdet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogDetMethod {
    Cholesky,
    Levinson,
}

/// `ln det K_N`.
pub fn toeplitz_logdet(model: &CovarianceModel, n: usize, method: LogDetMethod) -> Result<f64> {
    match method {
        LogDetMethod::Cholesky => {
            let k = model.toeplitz(n)?;
            let chol = k.cholesky().ok_or(Error::SingularCovariance)?;
            let l = chol.l_dirty();
            let mut s = 0.0;
            for i in 0..n {
                let d = l[(i, i)];
                if !(d > 0.0) {
                    return Err(Error::SingularCovariance);
                }
                s += 2.0 * d.ln();
            }
            Ok(s)
        }
        LogDetMethod::Levinson => Ok(prediction_error_variances(model, n)?
            .iter()
            .map(|v| v.ln())
            .sum()),
    }
}

/// Levinson–Durbin one-step prediction error variances `v_0, ..., v_{N-1}`.
pub fn prediction_error_variances(model: &CovarianceModel, n: usize) -> Result<Vec<f64>> {
    Ok(levinson(model, n)?.0)
}

/// Levinson–Durbin recursion. Returns the prediction error variances and, for each
/// order `j`, the coefficients `phi_j` with `E[xi_j | xi_0..xi_{j-1}] = sum_i phi_j[i] xi_{j-1-i}`.
pub fn levinson(model: &CovarianceModel, n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    model.check_horizon(n)?;
    let r = model.autocovariances();
    let mut vars = Vec::with_capacity(n);
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut phi: Vec<f64> = Vec::new();
    let mut v = r[0];
    for j in 0..n {
        if !(v > 1e-14 * r[0]) {
            return Err(Error::SingularCovariance);
        }
        vars.push(v);
        coeffs.push(phi.clone());
        if j + 1 == n {
            break;
        }
        let mut acc = r[j + 1];
        for (i, p) in phi.iter().enumerate() {
            acc -= p * r[j - i];
        }
        let kappa = acc / v;
        let mut next = Vec::with_capacity(j + 1);
        for i in 0..j {
            next.push(phi[i] - kappa * phi[j - 1 - i]);
        }
        next.push(kappa);
        phi = next;
        v *= 1.0 - kappa * kappa;
    }
    Ok((vars, coeffs))
}

/// `(n, E|S_n|^2 / (n^{2H} ell(1/n)))` for each `n` in `grid`.
pub fn variance_ratio_diagnostic(
    model: &CovarianceModel,
    hurst: f64,
    ell: &SlowlyVaryingFn,
    grid: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let top = grid.iter().copied().max().unwrap_or(0);
    let v = model.partial_sum_variances(top)?;
    Ok(grid
        .iter()
        .map(|&n| {
            let nf = n as f64;
            (n, v[n] / (nf.powf(2.0 * hurst) * ell.eval(1.0 / nf)))
        })
        .collect())
}

/// `(1 / 2 pi) int_{-pi}^{pi} ln(2 pi p(u)) du`, the Szegő limit of `(1/N) ln det K_N`.
///
/// Fails with [`Error::IrregularSequence`] when the density vanishes on a set of
/// positive measure or the integral diverges.
pub fn szego_integral(measure: &SpectralMeasure) -> Result<f64> {
    if !measure.has_density() || !measure.zones().is_empty() {
        return Err(Error::IrregularSequence);
    }
    let lnp = |u: f64| match measure.density(u) {
        Ok(p) if p > 0.0 => p.ln(),
        _ => f64::NAN,
    };
    // [0, a] through u = e^s; the log singularity becomes an exponentially damped tail
    let a: f64 = 0.5;
    let s_lo = a.ln() - 45.0;
    let g = |s: f64| lnp(s.exp()) * s.exp();
    let head = integrate_breaks(g, &uniform_breaks(s_lo, a.ln(), 1.0), 1e-12, 4000);
    let tail = integrate_breaks(lnp, &uniform_breaks(a, PI, 0.5), 1e-12, 4000);
    let total = match (head, tail) {
        (Ok(h), Ok(t)) => h.value + t.value,
        _ => return Err(Error::IrregularSequence),
    };
    if !total.is_finite() {
        return Err(Error::IrregularSequence);
    }
    Ok((2.0 * PI).ln() + total / PI)
}

/// `E|S_n|^2` split over the frequency zones `|u| < 1/(M d)`, `1/(M d) <= |u| <= M/d`
/// and `|u| > M/d`; the three parts add up to the full variance.
pub fn three_zone_variances(
    measure: &SpectralMeasure,
    n: usize,
    d: f64,
    m: f64,
) -> Result<[f64; 3]> {
    if !(m > 1.0 && d > 0.0) {
        return Err(Error::InvalidArgument("need M > 1 and d > 0".into()));
    }
    let lo = (1.0 / (m * d)).min(PI);
    let hi = (m / d).min(PI);
    let mut out = [0.0; 3];
    let bands = [(0.0, lo), (lo, hi), (hi, PI)];
    for (slot, (a, b)) in out.iter_mut().zip(bands) {
        if b > a {
            *slot = partial_sum_covariance_spectral(&measure.restrict(a, b)?, n, n)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fgn_closed_form_small_lags() {
        assert_eq!(fgn_autocovariance(0.7, 0), 1.0);
        assert_eq!(fgn_autocovariance(0.5, 3), 0.0);
        let naive = |h: f64, k: f64| {
            0.5 * ((k + 1.0).powf(2.0 * h) - 2.0 * k.powf(2.0 * h) + (k - 1.0).abs().powf(2.0 * h))
        };
        for &h in &[0.3, 0.7] {
            for k in 1..20 {
                let a = fgn_autocovariance(h, k);
                assert!((a - naive(h, k as f64)).abs() < 1e-13, "H={h}, k={k}");
            }
        }
    }

    #[test]
    fn levinson_recovers_ar1() {
        let phi: f64 = 0.6;
        let r: Vec<f64> = (0..10).map(|k| phi.powi(k)).collect();
        let model = CovarianceModel::from_autocovariances("ar1", r).unwrap();
        let (vars, coeffs) = levinson(&model, 10).unwrap();
        assert!((vars[0] - 1.0).abs() < 1e-15);
        for v in &vars[1..] {
            assert!((v - (1.0 - phi * phi)).abs() < 1e-12);
        }
        assert!((coeffs[5][0] - phi).abs() < 1e-12);
        assert!(coeffs[5][1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn horizon_is_enforced() {
        let model = CovarianceModel::from_autocovariances("x", vec![1.0, 0.0, 0.0]).unwrap();
        assert!(model.partial_sum_covariance(3).is_ok());
        assert!(matches!(
            model.partial_sum_covariance(4),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn cauchy_schwarz_violation_is_rejected() {
        assert!(CovarianceModel::from_autocovariances("x", vec![1.0, 1.5]).is_err());
    }

    #[test]
    fn regularization_shifts_r0() {
        let model = CovarianceModel::from_autocovariances("x", vec![1.0, 0.2]).unwrap();
        let reg = model.regularized(0.5);
        assert!((reg.r(0).unwrap() - (1.0 + PI)).abs() < 1e-15);
        assert_eq!(reg.r(1).unwrap(), 0.2);
    }

    #[test]
    fn csv_header_carries_label_and_size() {
        let model = CovarianceModel::from_autocovariances("iid", vec![1.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        model.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# label=iid, H=none, N=2\nk,r\n0,"));
    }
}
