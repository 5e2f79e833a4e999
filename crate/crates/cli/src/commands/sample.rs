//! `sample`: partial-sum paths of the configured measure.

use super::{Context, Outcome};
use crate::error::{CliError, CliResult};
use clap::ValueEnum;
use smalldev::sampler::sample_measure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Binary,
}

pub fn run(ctx: &Context, count: usize, format: Format) -> CliResult<Outcome> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let cfg = ctx.require_config("sample")?;
    let out = ctx.out_dir(Some(&cfg))?;
    let batch = sample_measure(&cfg.measure, cfg.n, count, cfg.seed)?;
    let mut buf = Vec::new();
    let name = match format {
        Format::Csv => {
            batch.write_csv(&mut buf)?;
            "paths.csv"
        }
        Format::Binary => {
            batch.write_binary(&mut buf)?;
            "paths.bin"
        }
    };
    let path = out.write(name, &buf)?;
    println!(
        "{count} paths of length {} ({:?} generator, seed {}) -> {}",
        cfg.n,
        batch.generator,
        cfg.seed,
        path.display()
    );
    Ok(Outcome::Pass)
}
