//! Exact-in-law samplers for partial sums `S_1, ..., S_N`.
//!
//! Paths are generated in fixed blocks, each block from its own random stream,
//! so a batch is a deterministic function of `(seed, count, N)` whatever the
//! thread count.

use crate::covariance::{repaired_cholesky, CovarianceModel};
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::spectral::{AtomComponents, SpectralMeasure};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Paths per random stream.
pub const BLOCK: usize = 256;

const MAGIC: &[u8; 5] = b"SDLB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Circulant,
    Cholesky,
    Atoms,
    /// Density part and atomic part sampled independently and added.
    Mixed,
}

/// `count` partial-sum trajectories of length `n`, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub generator: Generator,
    data: Vec<f64>,
}

impl PathBatch {
    fn from_rows(n: usize, count: usize, seed: u64, generator: Generator, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * count);
        PathBatch {
            n,
            count,
            seed,
            generator,
            data,
        }
    }

    /// `S_1, ..., S_N` of path `i`.
    pub fn path(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n.max(1))
    }

    pub fn max_abs(&self, i: usize) -> f64 {
        self.path(i).iter().fold(0.0, |m, x| f64::max(m, x.abs()))
    }

    pub fn max_abs_all(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.max_abs(i)).collect()
    }

    /// `(1/count) sum_paths S_n S_m` for 1-based `n, m`.
    pub fn second_moment(&self, n: usize, m: usize) -> f64 {
        self.paths().map(|p| p[n - 1] * p[m - 1]).sum::<f64>() / self.count as f64
    }

    /// Lag-`k` sample autocovariance of the increments, pooled over paths.
    pub fn increment_autocovariance(&self, k: usize) -> f64 {
        let mut s = 0.0;
        let mut terms = 0usize;
        for p in self.paths() {
            let x = |j: usize| if j == 0 { p[0] } else { p[j] - p[j - 1] };
            for j in 0..self.n.saturating_sub(k) {
                s += x(j) * x(j + k);
                terms += 1;
            }
        }
        s / terms as f64
    }

    fn add(&mut self, other: &PathBatch) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        self.generator = Generator::Mixed;
    }

    /// `SDLB1`, then `count` and `N` as little-endian `u64`, then the rows as
    /// little-endian `f64`.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.count as u64).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`PathBatch::write_binary`]. Seed and generator are not
    /// stored and must be supplied.
    pub fn read_binary(mut r: impl Read, seed: u64, generator: Generator) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidArgument("not an SDLB1 path dump".into()));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let count = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut data = Vec::with_capacity(count * n);
        for _ in 0..count * n {
            r.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        Ok(PathBatch::from_rows(n, count, seed, generator, data))
    }

    /// One row per path, columns `S1..SN`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = (1..=self.n).map(|j| format!("S{j}")).collect();
        writeln!(w, "path,{}", header.join(","))?;
        for (i, p) in self.paths().enumerate() {
            let row: Vec<String> = p.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{i},{}", row.join(","))?;
        }
        Ok(())
    }
}

fn cumulate(x: &mut [f64]) {
    let mut s = 0.0;
    for v in x.iter_mut() {
        s += *v;
        *v = s;
    }
}

/// Fills `count` rows of length `n` block by block; `fill(block_rng, rows)` writes
/// consecutive rows of one block.
fn generate_blocks<F>(n: usize, count: usize, seed: u64, domain: Domain, fill: F) -> Vec<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, &mut [f64]) + Sync,
{
    let mut data = vec![0.0; n * count];
    if n == 0 {
        return data;
    }
    data.par_chunks_mut(BLOCK * n)
        .enumerate()
        .for_each(|(b, chunk)| {
            let mut rng = stream(seed, domain, b as u64);
            fill(&mut rng, chunk);
        });
    data
}

/// Circulant-embedding (Davies–Harte) sampler.
pub fn sample_circulant(
    model: &CovarianceModel,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<PathBatch> {
    let embedding = CirculantEmbedding::new(model, n)?;
    let data = generate_blocks(n, count, seed, Domain::Circulant, |rng, chunk| {
        embedding.fill(rng, chunk, n);
    });
    Ok(PathBatch::from_rows(
        n,
        count,
        seed,
        Generator::Circulant,
        data,
    ))
}

struct CirculantEmbedding {
    m: usize,
    sqrt_eig: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl CirculantEmbedding {
    fn new(model: &CovarianceModel, n: usize) -> Result<Self> {
        let m = (2 * n).next_power_of_two().max(2);
        let half = m / 2;
        let r = model.autocovariances();
        if r.len() <= half {
            return Err(Error::HorizonTooShort {
                needed: half,
                available: model.k_max(),
            });
        }
        let mut c: Vec<Complex<f64>> = (0..m)
            .map(|j| Complex::new(r[if j <= half { j } else { m - j }], 0.0))
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut c);
        let r0 = r[0];
        let mut clipped = 0usize;
        let mut sqrt_eig = Vec::with_capacity(m);
        for z in &c {
            let lam = z.re;
            if lam < -1e-8 * r0 {
                return Err(Error::EmbeddingFailed { eigenvalue: lam });
            }
            if lam < 0.0 {
                clipped += 1;
            }
            sqrt_eig.push((lam.max(0.0) / m as f64).sqrt());
        }
        if clipped > 0 {
            log::warn!("circulant embedding: {clipped} slightly negative eigenvalues clipped to 0");
        }
        Ok(CirculantEmbedding { m, sqrt_eig, fft })
    }

    /// Each FFT yields two independent paths (real and imaginary parts).
    fn fill(&self, rng: &mut impl Rng, chunk: &mut [f64], n: usize) {
        let mut buf = vec![Complex::new(0.0, 0.0); self.m];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let rows = chunk.len() / n;
        let mut row = 0;
        while row < rows {
            for (z, &s) in buf.iter_mut().zip(&self.sqrt_eig) {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                *z = Complex::new(s * a, s * b);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            let out = &mut chunk[row * n..(row + 1) * n];
            for (o, z) in out.iter_mut().zip(&buf) {
                *o = z.re;
            }
            cumulate(out);
            row += 1;
            if row < rows {
                let out = &mut chunk[row * n..(row + 1) * n];
                for (o, z) in out.iter_mut().zip(&buf) {
                    *o = z.im;
                }
                cumulate(out);
                row += 1;
            }
        }
    }
}

/// Lower-triangular factor of `K_N` stored by rows, each row starting at its first
/// nonzero entry so that short-memory rows cost little.
#[derive(Debug, Clone)]
pub struct SequentialFactor {
    rows: Vec<(usize, Vec<f64>)>,
}

impl SequentialFactor {
    pub fn new(model: &CovarianceModel, n: usize) -> Result<Self> {
        let k = model.toeplitz(n)?;
        let (l, _) = repaired_cholesky(&k)?;
        let rows = (0..n)
            .map(|j| {
                let start = (0..=j).find(|&i| l[(j, i)] != 0.0).unwrap_or(j);
                (start, (start..=j).map(|i| l[(j, i)]).collect())
            })
            .collect();
        Ok(SequentialFactor { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Increment `j` from the first `j + 1` standard normals in `z`.
    #[inline]
    pub fn increment(&self, j: usize, z: &[f64]) -> f64 {
        let (start, ref coeffs) = self.rows[j];
        coeffs.iter().zip(&z[start..=j]).map(|(c, x)| c * x).sum()
    }
}

/// Sampler through the (semidefinite) Cholesky factor of `K_N`.
pub fn sample_cholesky(
    model: &CovarianceModel,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<PathBatch> {
    if n > 4096 {
        return Err(Error::InvalidArgument(format!(
            "cholesky sampler supports N <= 4096, got {n}"
        )));
    }
    let factor = SequentialFactor::new(model, n)?;
    let data = generate_blocks(n, count, seed, Domain::Cholesky, |rng, chunk| {
        let mut z = vec![0.0; n];
        for out in chunk.chunks_exact_mut(n) {
            for x in z.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            let mut s = 0.0;
            for (j, o) in out.iter_mut().enumerate() {
                s += factor.increment(j, &z);
                *o = s;
            }
        }
    });
    Ok(PathBatch::from_rows(
        n,
        count,
        seed,
        Generator::Cholesky,
        data,
    ))
}

/// Sampler for purely atomic measures through the real spectral representation.
pub fn sample_atoms(
    measure: &SpectralMeasure,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<PathBatch> {
    if measure.has_density() || measure.atoms().is_empty() {
        return Err(Error::NotPurelyAtomic);
    }
    Ok(sample_atom_components(
        &measure.atom_components(),
        n,
        count,
        seed,
    ))
}

/// `S_n = sum_c loads[c][n - 1] z_c` for independent standard normals `z_c`, one
/// component per atom at `0` or `-pi` and two per symmetric pair.
pub fn partial_sum_loadings(comps: &AtomComponents, n: usize) -> Vec<Vec<f64>> {
    let mut loads: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = comps.zero {
        loads.push(vec![w.sqrt(); n]);
    }
    if let Some(w) = comps.nyquist {
        loads.push(
            (1..=n)
                .map(|j| if j % 2 == 0 { w.sqrt() } else { -w.sqrt() })
                .collect(),
        );
    }
    for &(t, w) in &comps.pairs {
        let a = (2.0 * w).sqrt();
        loads.push((1..=n).map(|j| a * (j as f64 * t).cos()).collect());
        loads.push((1..=n).map(|j| a * (j as f64 * t).sin()).collect());
    }
    for l in loads.iter_mut() {
        cumulate(l);
    }
    loads
}

fn sample_atom_components(comps: &AtomComponents, n: usize, count: usize, seed: u64) -> PathBatch {
    let loads = partial_sum_loadings(comps, n);
    let dim = loads.len();
    let data = generate_blocks(n, count, seed, Domain::Atoms, |rng, chunk| {
        let mut z = vec![0.0; dim];
        for out in chunk.chunks_exact_mut(n) {
            for x in z.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o = loads.iter().zip(&z).map(|(l, x)| l[j] * x).sum();
            }
        }
    });
    PathBatch::from_rows(n, count, seed, Generator::Atoms, data)
}

/// Samples any measure: atoms through the spectral representation, the density
/// part by circulant embedding (Cholesky when the embedding fails), independently.
pub fn sample_measure(
    measure: &SpectralMeasure,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<PathBatch> {
    let atoms = (!measure.atoms().is_empty())
        .then(|| sample_atom_components(&measure.atom_components(), n, count, seed));
    if !measure.has_density() {
        return atoms.ok_or_else(|| Error::InvalidMeasure("measure is zero".into()));
    }
    let density = measure.density_part();
    let m = (2 * n).next_power_of_two().max(2);
    let model = CovarianceModel::from_measure(&density, m / 2)?;
    let mut batch = match sample_circulant(&model, n, count, seed) {
        Err(Error::EmbeddingFailed { eigenvalue }) => {
            log::warn!("circulant embedding failed ({eigenvalue:e}); using cholesky");
            sample_cholesky(&model, n, count, seed)?
        }
        other => other?,
    };
    if let Some(a) = atoms {
        batch.add(&a);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let model = CovarianceModel::from_autocovariances("iid", vec![1.0; 1]).unwrap();
        let b = sample_cholesky(&model, 1, 5, 3).unwrap();
        let mut buf = Vec::new();
        b.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"SDLB1");
        assert_eq!(buf.len(), 5 + 16 + 5 * 8);
        let back = PathBatch::read_binary(&buf[..], 3, Generator::Cholesky).unwrap();
        assert_eq!(back, b);
        assert!(PathBatch::read_binary(&b"XXXXX"[..], 0, Generator::Atoms).is_err());
    }

    #[test]
    fn atom_sampler_rejects_density() {
        let m = SpectralMeasure::fgn(0.5).unwrap();
        assert!(matches!(
            sample_atoms(&m, 4, 4, 0),
            Err(Error::NotPurelyAtomic)
        ));
    }

    #[test]
    fn nyquist_atom_alternates() {
        let m = SpectralMeasure::dirac(crate::spectral::DiracCase::Nyquist);
        let b = sample_atoms(&m, 6, 3, 1).unwrap();
        for p in b.paths() {
            assert_eq!(p[1], 0.0);
            assert_eq!(p[3], 0.0);
            assert_eq!(p[0], p[2]);
            assert_eq!(p[0], p[4]);
        }
    }

    #[test]
    fn short_horizon_is_rejected_by_circulant() {
        let model = CovarianceModel::from_autocovariances("x", vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            sample_circulant(&model, 4, 2, 0),
            Err(Error::HorizonTooShort { .. })
        ));
    }
}
