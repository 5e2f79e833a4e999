pub mod probability;
pub mod rate;
pub mod reproduce;
pub mod sample;
pub mod validate;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::OutDir;
use smalldev::properties::MARGIN;
use std::path::PathBuf;

/// Global flags shared by every subcommand.
pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

impl Context {
    pub fn require_config(&self, command: &str) -> CliResult<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("`{command}` needs --config PATH")))?;
        let mut cfg = ExperimentConfig::load(path)?;
        cfg.reseed(self.seed);
        Ok(cfg)
    }

    pub fn optional_config(&self) -> CliResult<Option<ExperimentConfig>> {
        match &self.config {
            None => Ok(None),
            Some(path) => {
                let mut cfg = ExperimentConfig::load(path)?;
                cfg.reseed(self.seed);
                Ok(Some(cfg))
            }
        }
    }

    /// `--out`, then the config's `output.dir`, then `./out`.
    pub fn out_dir(&self, cfg: Option<&ExperimentConfig>) -> CliResult<OutDir> {
        let dir = self
            .out
            .clone()
            .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        OutDir::create(dir)
    }
}

/// `lo <= hi` up to `MARGIN` standard errors.
pub fn ordered(lo: f64, hi: f64, err: f64) -> bool {
    lo - hi <= MARGIN * err + 1e-12 * hi.abs().max(1.0)
}

/// CSV field for an optional number.
pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.10e}"))
}
