//! Direct Monte Carlo counting with early exit.

use super::{BandProbability, Method};
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::sampler::{SequentialFactor, BLOCK};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Paths in the first round.
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Budget for adaptive extension; rounds double until `min_hits` is reached.
    #[serde(default)]
    pub max_samples: Option<u64>,
    #[serde(default = "default_min_hits")]
    pub min_hits: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> u64 {
    1_000_000
}

fn default_min_hits() -> u64 {
    25
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: default_samples(),
            max_samples: None,
            min_hits: default_min_hits(),
            seed: 0,
        }
    }
}

/// Paths of block `b` that stay in the band.
fn count_block(factor: &SequentialFactor, f: f64, seed: u64, block: u64, paths: u64) -> u64 {
    let n = factor.len();
    let mut rng = stream(seed, Domain::MonteCarlo, block);
    let mut z = vec![0.0; n];
    let mut hits = 0;
    for _ in 0..paths {
        let mut s = 0.0;
        let mut inside = true;
        for j in 0..n {
            z[j] = rng.sample(StandardNormal);
            s += factor.increment(j, &z);
            if s.abs() > f {
                inside = false;
                break;
            }
        }
        hits += inside as u64;
    }
    hits
}

fn count_range(factor: &SequentialFactor, f: f64, seed: u64, from: u64, to: u64) -> u64 {
    let per = BLOCK as u64;
    let first = from / per;
    let last = to.div_ceil(per);
    (first..last)
        .into_par_iter()
        .map(|b| {
            let lo = (b * per).max(from);
            let hi = ((b + 1) * per).min(to);
            // blocks are only ever split at round boundaries, which are multiples of BLOCK
            debug_assert!(lo == b * per);
            count_block(factor, f, seed, b, hi - lo)
        })
        .sum()
}

/// Monte Carlo estimate of `P{max_{n <= N} |S_n| <= f}` under `model`.
///
/// Rounds of `samples, samples, 2 samples, ...` paths run until `min_hits` paths
/// have stayed in the band or `max_samples` is spent. With no hit at all, `p` is the
/// 95% upper bound `3 / paths` and `upper_bound_only` is set.
pub fn band_probability_mc(
    model: &CovarianceModel,
    n: usize,
    f: f64,
    cfg: &McConfig,
) -> Result<BandProbability> {
    let start = Instant::now();
    if !(f > 0.0) || n == 0 || cfg.samples == 0 {
        return Err(Error::InvalidArgument(
            "need f > 0, N >= 1 and samples >= 1".into(),
        ));
    }
    let factor = SequentialFactor::new(model, n)?;
    let per = BLOCK as u64;
    let first = cfg.samples.div_ceil(per) * per;
    let budget = cfg.max_samples.unwrap_or(first).max(first);
    let mut done = 0u64;
    let mut hits = 0u64;
    let mut round = first;
    loop {
        let to = (done + round).min(budget.div_ceil(per) * per);
        hits += count_range(&factor, f, cfg.seed, done, to);
        done = to;
        if hits >= cfg.min_hits || done >= budget {
            break;
        }
        round = done;
    }
    let total = done as f64;
    let mut out = if hits == 0 {
        let p = 3.0 / total;
        BandProbability {
            method: Method::MonteCarlo,
            n,
            f,
            log_p: p.ln(),
            p,
            err: 0.0,
            seed: cfg.seed,
            wall_time_ms: 0.0,
            log_err: 0.0,
            upper_bound_only: true,
        }
    } else {
        let p = hits as f64 / total;
        let err = (p * (1.0 - p) / total).sqrt();
        BandProbability {
            method: Method::MonteCarlo,
            n,
            f,
            log_p: p.ln(),
            p,
            err,
            seed: cfg.seed,
            wall_time_ms: 0.0,
            log_err: err / p,
            upper_bound_only: false,
        }
    };
    if hits > 0 && hits < cfg.min_hits {
        log::warn!("only {hits} of {done} paths stayed in the band; estimate is noisy");
    }
    out.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hits_give_an_upper_bound() {
        let mut r = vec![0.0; 40];
        r[0] = 1.0;
        let model = CovarianceModel::from_autocovariances("iid", r).unwrap();
        let cfg = McConfig {
            samples: 1000,
            ..McConfig::default()
        };
        let b = band_probability_mc(&model, 40, 0.01, &cfg).unwrap();
        assert!(b.upper_bound_only);
        assert!((b.p - 3.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn sure_event_counts_every_path() {
        let model = CovarianceModel::from_autocovariances("iid", vec![1.0]).unwrap();
        let cfg = McConfig {
            samples: 512,
            ..McConfig::default()
        };
        let b = band_probability_mc(&model, 1, 1e6, &cfg).unwrap();
        assert_eq!(b.p, 1.0);
        assert_eq!(b.err, 0.0);
    }
}
