//! `rate`: asymptotic predictions and bounds for the configured instance.

use super::{opt, Context, Outcome};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use serde::Serialize;
use smalldev::covariance::CovarianceModel;
use smalldev::engines::transfer_rate;
use smalldev::rates::{
    best_regularized_lower_bound, classify_regime, estimate_kappa, fbm_rate, szego_rate,
    volumetric_upper_bound, KappaConfig, PredictionKind, RatePrediction, Regime, Theorem,
};
use smalldev::spectral::SlowlyVaryingFn;
use smalldev::Error;
use std::collections::BTreeMap;

pub const HEADER: &str = "theorem,kind,N,f,log_p,interval_lo,interval_hi,lower_envelope,regime";

#[derive(Debug, Serialize)]
pub struct RateReport {
    pub config: ExperimentConfig,
    pub regime: Regime,
    pub predictions: Vec<RatePrediction>,
}

fn bound(
    theorem: Theorem,
    kind: PredictionKind,
    cfg: &ExperimentConfig,
    regime: Regime,
    log_p: f64,
    delta: Option<f64>,
) -> RatePrediction {
    let mut constants = BTreeMap::new();
    if let Some(d) = delta {
        constants.insert("delta".into(), d);
    }
    RatePrediction {
        theorem,
        kind,
        n: cfg.n,
        f: cfg.f(),
        log_p,
        interval: None,
        lower_envelope: None,
        regime,
        constants,
    }
}

pub fn evaluate(cfg: &ExperimentConfig) -> CliResult<RateReport> {
    let (n, f) = (cfg.n, cfg.f());
    let measure = &cfg.measure;
    let hurst = measure.hurst().map_or(0.5, |h| h.hurst());
    let ell = SlowlyVaryingFn::from_family(measure.ell_family())?;
    let regime = classify_regime(&cfg.boundary, hurst, &ell, n)?;
    let mut predictions = Vec::new();
    match regime {
        Regime::ToZero => match szego_rate(measure, &cfg.boundary, n) {
            Ok(p) => predictions.push(p),
            Err(Error::IrregularSequence) => {
                log::warn!("log-density is not integrable; no two-term prediction")
            }
            Err(e) => return Err(e.into()),
        },
        Regime::ToInfinitySubScale if measure.has_fgn_term() => {
            let kappa = if hurst == 0.5 {
                None
            } else {
                log::info!("estimating kappa at H = {hurst}");
                let kc = KappaConfig::default();
                Some(estimate_kappa(hurst, &kc)?)
            };
            predictions.push(fbm_rate(hurst, &ell, &cfg.boundary, n, kappa.as_ref())?);
        }
        Regime::Constant => {
            if let Some(v) = measure.iid_variance() {
                let c = transfer_rate(f / v.sqrt(), 200)?;
                let mut p = bound(
                    Theorem::ConstantLimit,
                    PredictionKind::Asymptotic,
                    cfg,
                    regime,
                    n as f64 * c.c,
                    None,
                );
                p.constants.insert("c".into(), c.c);
                predictions.push(p);
            }
        }
        _ => log::warn!("regime {} has no asymptotic prediction", regime.name()),
    }
    let model = CovarianceModel::from_measure(measure, n)?;
    match volumetric_upper_bound(&model, n, f) {
        Ok(u) => predictions.push(bound(
            Theorem::VolumetricUpper,
            PredictionKind::UpperBound,
            cfg,
            regime,
            u,
            None,
        )),
        Err(e) => log::info!("no volumetric bound: {e}"),
    }
    match best_regularized_lower_bound(&model, n, f) {
        Ok((l, d)) => predictions.push(bound(
            Theorem::RegularizedLower,
            PredictionKind::LowerBound,
            cfg,
            regime,
            l,
            Some(d),
        )),
        Err(e) => log::info!("no regularized bound: {e}"),
    }
    Ok(RateReport {
        config: cfg.clone(),
        regime,
        predictions,
    })
}

fn kind_name(k: PredictionKind) -> &'static str {
    match k {
        PredictionKind::Asymptotic => "asymptotic",
        PredictionKind::UpperBound => "upper-bound",
        PredictionKind::LowerBound => "lower-bound",
    }
}

pub fn run(ctx: &Context) -> CliResult<Outcome> {
    let cfg = ctx.require_config("rate")?;
    let out = ctx.out_dir(Some(&cfg))?;
    let report = evaluate(&cfg)?;
    let mut csv = format!("{HEADER}\n");
    println!("regime: {}", report.regime.name());
    for p in &report.predictions {
        println!(
            "{:<18} {:<11} ln p = {:.6}",
            p.theorem.name(),
            kind_name(p.kind),
            p.log_p
        );
        csv.push_str(&format!(
            "{},{},{},{:.10e},{:.10e},{},{},{},{}\n",
            p.theorem.name(),
            kind_name(p.kind),
            p.n,
            p.f,
            p.log_p,
            opt(p.interval.map(|i| i.0)),
            opt(p.interval.map(|i| i.1)),
            opt(p.lower_envelope),
            p.regime.name()
        ));
    }
    out.write_result("rate.json", "rate", &report)?;
    out.write("rate.csv", csv.as_bytes())?;
    Ok(Outcome::Pass)
}
