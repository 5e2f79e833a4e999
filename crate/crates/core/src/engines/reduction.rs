//! Band probabilities for purely atomic measures.
//!
//! The partial sums live in a space of dimension at most the number of atom
//! coordinates, `S_n = a_n . z`. A Gram–Schmidt pass over `a_1, a_2, ...` yields an
//! orthonormal basis in which the rows form a lower staircase; the probability is
//! then a low-dimensional sequential-conditioning integral (closed form in one
//! dimension).

use super::qmc::{staircase_probability, QmcConfig, Staircase};
use super::{BandProbability, Method};
use crate::error::{Error, Result};
use crate::sampler::partial_sum_loadings;
use crate::spectral::SpectralMeasure;
use std::time::Instant;

const RANK_TOL: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Staircase form of `|S_n| <= f`, `n <= N`, for a purely atomic measure.
pub fn atomic_staircase(measure: &SpectralMeasure, n: usize, f: f64) -> Result<Staircase> {
    if measure.has_density() || measure.atoms().is_empty() {
        return Err(Error::NotPurelyAtomic);
    }
    let loads = partial_sum_loadings(&measure.atom_components(), n);
    let d = loads.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| loads.iter().map(|l| l[i]).collect())
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for row in &rows {
        if basis.len() == d {
            break;
        }
        let norm = dot(row, row).sqrt();
        let mut res = row.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&res, q);
                for (r, x) in res.iter_mut().zip(q) {
                    *r -= c * x;
                }
            }
        }
        let rn = dot(&res, &res).sqrt();
        if rn > RANK_TOL * norm.max(f64::MIN_POSITIVE) {
            basis.push(res.iter().map(|x| x / rn).collect());
        }
    }
    let coords: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| basis.iter().map(|q| dot(row, q)).collect())
        .collect();
    Staircase::new(&coords, &vec![-f; n], &vec![f; n], RANK_TOL)
}

/// `P{max_{n <= N} |S_n| <= f}` for a purely atomic measure.
pub fn band_probability_reduction(
    measure: &SpectralMeasure,
    n: usize,
    f: f64,
    cfg: &QmcConfig,
) -> Result<BandProbability> {
    let start = Instant::now();
    if !(f > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("need f > 0 and N >= 1".into()));
    }
    let st = atomic_staircase(measure, n, f)?;
    let est = staircase_probability(&st, cfg)?;
    Ok(BandProbability::from_log(
        Method::Reduction,
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
    use crate::normal::central_mass;
    use crate::spectral::DiracCase;

    #[test]
    fn dirac_zero_is_closed_form() {
        let m = SpectralMeasure::dirac(DiracCase::Zero);
        let b = band_probability_reduction(&m, 10, 0.5, &QmcConfig::default()).unwrap();
        assert!((b.p - central_mass(0.05)).abs() < 1e-15);
        assert_eq!(b.err, 0.0);
    }

    #[test]
    fn staircase_dimensions_of_dirac_cases() {
        for (case, d) in [
            (DiracCase::Zero, 1),
            (DiracCase::Nyquist, 1),
            (DiracCase::QuarterPair, 2),
            (DiracCase::FourAtoms, 4),
        ] {
            let st = atomic_staircase(&SpectralMeasure::dirac(case), 12, 0.1).unwrap();
            assert_eq!(st.dim(), d, "{case:?}");
        }
    }
}
