//! `validate`: the randomized property suites, plus instance checks on the
//! configured measure when `--config` is given.

use super::{ordered, Context, Outcome};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use serde::Serialize;
use smalldev::covariance::CovarianceModel;
use smalldev::engines::{band_probability, QmcConfig, MAX_QMC_DIM};
use smalldev::properties::{run_all, PropertyConfig, SuiteResult};
use smalldev::rates::{best_regularized_lower_bound, volumetric_upper_bound};

#[derive(Debug, Serialize)]
pub struct InstanceCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct ValidateReport {
    pub seeds: Vec<u64>,
    pub trials: usize,
    pub suites: Vec<SuiteResult>,
    pub instance: Vec<InstanceCheck>,
    pub pass: bool,
}

fn instance_checks(cfg: &ExperimentConfig) -> CliResult<Vec<InstanceCheck>> {
    let (n, f) = (cfg.n, cfg.f());
    let measure = &cfg.measure;
    let model = CovarianceModel::from_measure(measure, n)?;
    let mut checks = vec![match model.check_psd(n) {
        Ok(()) => InstanceCheck {
            name: "psd".into(),
            pass: true,
            detail: format!("Toeplitz matrix of size {n} is positive semidefinite"),
        },
        Err(e) => InstanceCheck {
            name: "psd".into(),
            pass: false,
            detail: e.to_string(),
        },
    }];
    if !measure.is_purely_atomic() && n > MAX_QMC_DIM {
        log::warn!("N = {n} is beyond QMC; probability checks skipped");
        return Ok(checks);
    }
    let qmc = cfg
        .engines
        .qmc
        .unwrap_or_else(|| QmcConfig::with_seed(cfg.seed));
    let p = |f: f64| band_probability(measure, n, f, &qmc);
    let mid = p(f)?;
    if let (Ok(up), Ok((lo, _))) = (
        volumetric_upper_bound(&model, n, f),
        best_regularized_lower_bound(&model, n, f),
    ) {
        checks.push(InstanceCheck {
            name: "sandwich".into(),
            pass: ordered(mid.log_p, up, mid.log_err) && ordered(lo, mid.log_p, mid.log_err),
            detail: format!("{lo:.4} <= {:.4} <= {up:.4}", mid.log_p),
        });
    }
    let (a, b) = (p(0.8 * f)?, p(1.2 * f)?);
    let chord = 0.5 * (a.log_p + b.log_p);
    let err = mid.log_err.hypot(0.5 * a.log_err.hypot(b.log_err));
    checks.push(InstanceCheck {
        name: "log-concavity".into(),
        pass: ordered(chord, mid.log_p, err),
        detail: format!(
            "ln p({:.4}) = {:.4} vs chord {chord:.4} of f = {:.4}, {:.4}",
            f,
            mid.log_p,
            0.8 * f,
            1.2 * f
        ),
    });
    Ok(checks)
}

pub fn run(ctx: &Context, trials: Option<usize>, seeds: u64) -> CliResult<Outcome> {
    let cfg = ctx.optional_config()?;
    let out = ctx.out_dir(cfg.as_ref())?;
    let base = ctx.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let defaults = PropertyConfig::default();
    let trials = trials.unwrap_or(defaults.trials);
    let seeds: Vec<u64> = (0..seeds.max(1)).map(|i| base.wrapping_add(i)).collect();
    let mut suites = Vec::new();
    for &seed in &seeds {
        let pc = PropertyConfig {
            trials,
            seed,
            ..defaults
        };
        for r in run_all(&pc)? {
            println!(
                "{:<24} seed {seed:<4} {}  worst margin {:.2}",
                r.suite.name(),
                if r.pass { "PASS" } else { "FAIL" },
                r.worst_margin()
            );
            suites.push(r);
        }
    }
    let instance = match &cfg {
        Some(c) => instance_checks(c)?,
        None => Vec::new(),
    };
    for c in &instance {
        println!(
            "{:<24} {}  {}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    let pass = suites.iter().all(|s| s.pass) && instance.iter().all(|c| c.pass);
    let report = ValidateReport {
        seeds,
        trials,
        suites,
        instance,
        pass,
    };
    out.write_result("validate.json", "validate", &report)?;
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(Outcome::from_bool(pass))
}
