//! The experiment document read by `--config`.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use smalldev::engines::{McConfig, QmcConfig};
use smalldev::rates::Boundary;
use smalldev::spectral::SpectralMeasure;
use std::path::{Path, PathBuf};

/// Largest horizon any command accepts.
pub const MAX_N: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub measure: SpectralMeasure,
    pub boundary: Boundary,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default)]
    pub engines: Engines,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Output,
}

/// Engine budgets; `null` switches an engine off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Engines {
    #[serde(default = "default_qmc")]
    pub qmc: Option<QmcConfig>,
    #[serde(default = "default_mc")]
    pub monte_carlo: Option<McConfig>,
    /// Gauss–Legendre nodes of the transfer operator (i.i.d. measures only).
    #[serde(default = "default_nodes")]
    pub transfer_nodes: Option<usize>,
}

fn default_qmc() -> Option<QmcConfig> {
    Some(QmcConfig::default())
}

fn default_mc() -> Option<McConfig> {
    Some(McConfig {
        samples: 200_000,
        ..McConfig::default()
    })
}

fn default_nodes() -> Option<usize> {
    Some(200)
}

impl Default for Engines {
    fn default() -> Self {
        Engines {
            qmc: default_qmc(),
            monte_carlo: default_mc(),
            transfer_nodes: default_nodes(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// Used when `--out` is absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        cfg.validate().map_err(|reason| CliError::Config {
            path: path.to_owned(),
            reason,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 || self.n > MAX_N {
            return Err(format!("N must lie in 1..={MAX_N}, got {}", self.n));
        }
        self.boundary.validate().map_err(|e| e.to_string())?;
        self.boundary.eval(self.n).map_err(|e| e.to_string())?;
        if let Some(q) = &self.engines.qmc {
            if q.samples == 0 || q.randomizations < 2 {
                return Err("qmc needs samples >= 1 and randomizations >= 2".into());
            }
        }
        if let Some(m) = &self.engines.monte_carlo {
            if m.samples == 0 {
                return Err("monte_carlo needs samples >= 1".into());
            }
        }
        if let Some(nodes) = self.engines.transfer_nodes {
            if nodes < 16 {
                return Err(format!("transfer_nodes must be >= 16, got {nodes}"));
            }
        }
        Ok(())
    }

    /// Applies `seed` to the config and every engine.
    pub fn reseed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(q) = self.engines.qmc.as_mut() {
            q.seed = self.seed;
        }
        if let Some(m) = self.engines.monte_carlo.as_mut() {
            m.seed = self.seed;
        }
    }

    pub fn f(&self) -> f64 {
        self.boundary.eval(self.n).expect("validated boundary")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped(name: &str) -> ExperimentConfig {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("configs")
            .join(name);
        ExperimentConfig::load(&path).unwrap()
    }

    #[test]
    fn shipped_configs_round_trip() {
        for name in ["iid.json", "fgn-brownian-scale.json", "atoms.json"] {
            let cfg = shipped(name);
            let text = serde_json::to_string(&cfg).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, cfg, "{name}");
            assert_eq!(serde_json::to_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn null_switches_an_engine_off() {
        let cfg = shipped("atoms.json");
        assert!(cfg.engines.monte_carlo.is_none());
        assert!(cfg.engines.qmc.is_some());
    }

    #[test]
    fn reseed_reaches_every_engine() {
        let mut cfg = shipped("iid.json");
        cfg.reseed(Some(42));
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.engines.qmc.unwrap().seed, 42);
        assert_eq!(cfg.engines.monte_carlo.unwrap().seed, 42);
    }

    #[test]
    fn rejects_out_of_range_horizon() {
        let mut cfg = shipped("iid.json");
        cfg.n = 0;
        assert!(cfg.validate().is_err());
        cfg.n = MAX_N + 1;
        assert!(cfg.validate().is_err());
        cfg.n = 4;
        cfg.boundary = Boundary::Table {
            values: vec![1.0; 3],
        };
        assert!(cfg.validate().unwrap_err().contains("3 entries"));
    }
}
