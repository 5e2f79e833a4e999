//! `probability`: every applicable engine on one `(measure, N, f)` instance.

use super::{opt, ordered, Context, Outcome};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use serde::Serialize;
use smalldev::covariance::CovarianceModel;
use smalldev::engines::{
    band_probability, band_probability_mc, transfer_probability, BandProbability, Method,
    MAX_QMC_DIM,
};
use smalldev::rates::{best_regularized_lower_bound, volumetric_upper_bound};

pub const HEADER: &str = "N,f,exact_method,exact_log_p,exact_log_err,mc_log_p,mc_log_err,mc_upper_bound_only,transfer_log_p,transfer_log_err,volumetric_upper,regularized_lower,sandwich,agreement";

#[derive(Debug, Serialize)]
pub struct Skipped {
    pub engine: String,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct ProbabilityReport {
    pub config: ExperimentConfig,
    #[serde(rename = "N")]
    pub n: usize,
    pub f: f64,
    pub engines: Vec<BandProbability>,
    pub skipped: Vec<Skipped>,
    pub volumetric_upper: Option<f64>,
    pub regularized_lower: Option<f64>,
    pub regularized_delta: Option<f64>,
    /// Every engine lies between the two bounds; absent when a bound is unavailable.
    pub sandwich: Option<bool>,
    /// Engines agree pairwise within their combined errors.
    pub agreement: bool,
}

fn skip(skipped: &mut Vec<Skipped>, engine: &str, reason: impl Into<String>) {
    let reason = reason.into();
    log::info!("{engine} skipped: {reason}");
    skipped.push(Skipped {
        engine: engine.into(),
        reason,
    });
}

pub fn evaluate(cfg: &ExperimentConfig) -> CliResult<ProbabilityReport> {
    let (n, f) = (cfg.n, cfg.f());
    let measure = &cfg.measure;
    let mut engines = Vec::new();
    let mut skipped = Vec::new();

    match &cfg.engines.qmc {
        None => skip(&mut skipped, "qmc", "disabled"),
        Some(_) if !measure.is_purely_atomic() && n > MAX_QMC_DIM => skip(
            &mut skipped,
            "qmc",
            format!("N = {n} exceeds the QMC dimension limit {MAX_QMC_DIM}"),
        ),
        Some(q) => engines.push(band_probability(measure, n, f, q)?),
    }

    let model = CovarianceModel::from_measure(measure, n)?;
    match &cfg.engines.monte_carlo {
        None => skip(&mut skipped, "monte-carlo", "disabled"),
        Some(m) => engines.push(band_probability_mc(&model, n, f, m)?),
    }

    match (cfg.engines.transfer_nodes, measure.iid_variance()) {
        (None, _) => skip(&mut skipped, "transfer", "disabled"),
        (Some(_), None) => skip(&mut skipped, "transfer", "measure is not i.i.d."),
        (Some(nodes), Some(v)) => {
            let mut b = transfer_probability(n, f / v.sqrt(), nodes)?;
            b.f = f;
            engines.push(b);
        }
    }

    let volumetric_upper = volumetric_upper_bound(&model, n, f)
        .inspect_err(|e| log::info!("no volumetric bound: {e}"))
        .ok();
    let lower = best_regularized_lower_bound(&model, n, f)
        .inspect_err(|e| log::info!("no regularized bound: {e}"))
        .ok();

    let resolved: Vec<&BandProbability> = engines.iter().filter(|b| !b.upper_bound_only).collect();
    let sandwich = match (volumetric_upper, lower) {
        (Some(up), Some((lo, _))) => Some(
            resolved
                .iter()
                .all(|b| ordered(b.log_p, up, b.log_err) && ordered(lo, b.log_p, b.log_err)),
        ),
        _ => None,
    };
    let mut agreement = true;
    for (i, a) in engines.iter().enumerate() {
        for b in &engines[i + 1..] {
            agreement &= match (a.upper_bound_only, b.upper_bound_only) {
                (false, false) => {
                    (a.log_p - b.log_p).abs() <= super::MARGIN * a.log_err.hypot(b.log_err) + 1e-9
                }
                (true, false) => ordered(b.log_p, a.log_p, b.log_err),
                (false, true) => ordered(a.log_p, b.log_p, a.log_err),
                (true, true) => true,
            };
        }
    }

    Ok(ProbabilityReport {
        config: cfg.clone(),
        n,
        f,
        engines,
        skipped,
        volumetric_upper,
        regularized_lower: lower.map(|l| l.0),
        regularized_delta: lower.map(|l| l.1),
        sandwich,
        agreement,
    })
}

pub fn csv_row(r: &ProbabilityReport) -> String {
    let find = |pred: &dyn Fn(Method) -> bool| r.engines.iter().find(|b| pred(b.method));
    let exact = find(&|m| matches!(m, Method::Qmc | Method::Reduction));
    let mc = find(&|m| m == Method::MonteCarlo);
    let tr = find(&|m| m == Method::Transfer);
    [
        r.n.to_string(),
        format!("{:.10e}", r.f),
        exact.map_or_else(String::new, |b| b.method.name().into()),
        opt(exact.map(|b| b.log_p)),
        opt(exact.map(|b| b.log_err)),
        opt(mc.map(|b| b.log_p)),
        opt(mc.map(|b| b.log_err)),
        mc.map_or_else(String::new, |b| b.upper_bound_only.to_string()),
        opt(tr.map(|b| b.log_p)),
        opt(tr.map(|b| b.log_err)),
        opt(r.volumetric_upper),
        opt(r.regularized_lower),
        r.sandwich.map_or_else(String::new, |s| s.to_string()),
        r.agreement.to_string(),
    ]
    .join(",")
}

pub fn run(ctx: &Context) -> CliResult<Outcome> {
    let cfg = ctx.require_config("probability")?;
    let out = ctx.out_dir(Some(&cfg))?;
    let report = evaluate(&cfg)?;
    for b in &report.engines {
        let bound = if b.upper_bound_only {
            " (upper bound)"
        } else {
            ""
        };
        println!(
            "{:<12} ln p = {:.6} +- {:.2e}{bound}",
            b.method.name(),
            b.log_p,
            b.log_err
        );
    }
    if let Some(u) = report.volumetric_upper {
        println!("{:<12} ln p <= {u:.6}", "volumetric");
    }
    if let Some(l) = report.regularized_lower {
        println!("{:<12} ln p >= {l:.6}", "regularized");
    }
    let hash = out.write_result("probability.json", "probability", &report)?;
    out.write(
        "probability.csv",
        format!("{HEADER}\n{}\n", csv_row(&report)).as_bytes(),
    )?;
    let pass = report.sandwich.unwrap_or(true) && report.agreement;
    println!(
        "sandwich: {}  agreement: {}  sha256 {hash}",
        report
            .sandwich
            .map_or("n/a", |s| if s { "ok" } else { "violated" }),
        if report.agreement { "ok" } else { "violated" },
    );
    Ok(Outcome::from_bool(pass))
}
