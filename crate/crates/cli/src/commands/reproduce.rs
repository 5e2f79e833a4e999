//! `reproduce`: preset experiments comparing predicted rates with measured
//! probabilities. Each writes `<preset>.csv`, `<preset>.svg` and `<preset>.json`.

use super::{Context, Outcome};
use crate::error::{CliError, CliResult};
use crate::plot::{self, Panel};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use smalldev::covariance::CovarianceModel;
use smalldev::engines::{
    band_probability, band_probability_mc, transfer_rate, McConfig, QmcConfig,
};
use smalldev::rates::{
    counterexample_check, default_dirac_f_ladder, default_dirac_n_ladder, dirac_example_check,
    estimate_kappa, fbm_rate, szego_rate, write_report_csv, Boundary, KappaConfig, ReportRow,
    Verdict, DIRAC_TOLERANCE, KAPPA_HALF,
};
use smalldev::spectral::{
    DiracCase, PerturbationLevel, PerturbationSchedule, SlowlyVaryingFn, SpectralMeasure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Mogulskii,
    Szego,
    Dirac,
    Transfer,
    Counterexample,
    Kappa,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Mogulskii => "mogulskii",
            Preset::Szego => "szego",
            Preset::Dirac => "dirac",
            Preset::Transfer => "transfer",
            Preset::Counterexample => "counterexample",
            Preset::Kappa => "kappa",
        }
    }
}

struct Experiment {
    rows: Vec<ReportRow>,
    panels: Vec<Panel>,
    details: Value,
    pass: bool,
}

fn row(
    theorem: &str,
    n: usize,
    f: f64,
    predicted: f64,
    measured: f64,
    err: f64,
    ok: bool,
) -> ReportRow {
    ReportRow {
        theorem: theorem.into(),
        n,
        f,
        predicted,
        measured,
        err,
        verdict: Verdict::from_bool(ok),
    }
}

fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (k - 1) as f64).exp())
        .collect()
}

fn to_json(v: &impl Serialize) -> CliResult<Value> {
    Ok(serde_json::to_value(v).map_err(smalldev::Error::from)?)
}

/// `-ln p / (N f^-2)` approaches `pi^2/8` for FGN at `H = 1/2` and `f_N = N^{1/4}`.
fn mogulskii(quick: bool, seed: u64) -> CliResult<Experiment> {
    let measure = SpectralMeasure::fgn(0.5)?;
    let boundary = Boundary::Power {
        c: 1.0,
        gamma: 0.25,
    };
    let (ladder, mc) = if quick {
        (
            vec![64, 128],
            McConfig {
                samples: 200_000,
                max_samples: Some(20_000_000),
                min_hits: 40,
                seed,
            },
        )
    } else {
        (
            vec![64, 256],
            McConfig {
                samples: 1_000_000,
                max_samples: Some(160_000_000),
                min_hits: 40,
                seed,
            },
        )
    };
    let one = SlowlyVaryingFn::one();
    let mut rows = Vec::new();
    let mut measured = Vec::new();
    let mut ratios = Vec::new();
    for &n in &ladder {
        let f = boundary.eval(n)?;
        let pred = fbm_rate(0.5, &one, &boundary, n, None)?;
        let model = CovarianceModel::from_measure(&measure, n)?;
        let b = band_probability_mc(&model, n, f, &mc)?;
        if b.upper_bound_only {
            log::warn!(
                "N = {n}: no path stayed in the band; ln p <= {:.3} only",
                b.log_p
            );
        }
        let ratio = b.log_p / pred.log_p;
        let ok = !b.upper_bound_only && (0.6..=1.6).contains(&ratio);
        rows.push(row("fbm-rate", n, f, pred.log_p, b.log_p, b.log_err, ok));
        ratios.push((n as f64, ratio, b.log_err / pred.log_p.abs()));
        measured.push(b);
    }
    let toward = (ratios[ratios.len() - 1].1 - 1.0).abs() < (ratios[0].1 - 1.0).abs();
    let pass = rows.iter().all(|r| r.verdict == Verdict::Pass) && toward;
    let (lo, hi) = (ladder[0] as f64 / 1.5, *ladder.last().unwrap() as f64 * 1.5);
    let panels = vec![
        Panel {
            title: "ln P vs N at f = N^(1/4)".into(),
            x_label: "N".into(),
            y_label: "ln P".into(),
            log_x: true,
            curve: log_grid(lo, hi, 40)
                .into_iter()
                .map(|n| (n, -KAPPA_HALF * n.sqrt()))
                .collect(),
            points: rows
                .iter()
                .map(|r| (r.n as f64, r.measured, r.err))
                .collect(),
        },
        Panel {
            title: "measured / predicted".into(),
            x_label: "N".into(),
            y_label: "ratio".into(),
            log_x: true,
            curve: vec![(lo, 1.0), (hi, 1.0)],
            points: ratios,
        },
    ];
    Ok(Experiment {
        rows,
        panels,
        details: json!({ "measurements": to_json(&measured)?, "toward_one": toward }),
        pass,
    })
}

/// Per-step gap between measured `ln p` and the two-term formula at `f = 0.05`.
fn szego(quick: bool, seed: u64) -> CliResult<Experiment> {
    let measure = SpectralMeasure::white_noise(1.0)?;
    let f = 0.05;
    let boundary = Boundary::Constant { f };
    let qmc = QmcConfig {
        samples: if quick { 1024 } else { 4096 },
        ..QmcConfig::with_seed(seed)
    };
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    let mut measured = Vec::new();
    for n in [8usize, 16, 32] {
        let b = band_probability(&measure, n, f, &qmc)?;
        let pred = szego_rate(&measure, &boundary, n)?;
        let gap = (b.log_p - pred.log_p) / n as f64;
        rows.push(row(
            "szego",
            n,
            f,
            pred.log_p,
            b.log_p,
            b.log_err,
            gap.abs() < 0.05,
        ));
        gaps.push((n as f64, gap, b.log_err / n as f64));
        measured.push(b);
    }
    let decreasing = gaps.windows(2).all(|w| w[1].1.abs() < w[0].1.abs());
    let pass = decreasing && rows.iter().all(|r| r.verdict == Verdict::Pass);
    let panels = vec![Panel {
        title: "(measured - predicted) / N".into(),
        x_label: "N".into(),
        y_label: "per-step gap".into(),
        log_x: true,
        curve: vec![(6.0, 0.0), (40.0, 0.0)],
        points: gaps,
    }];
    Ok(Experiment {
        rows,
        panels,
        details: json!({ "measurements": to_json(&measured)?, "decreasing": decreasing }),
        pass,
    })
}

/// Fitted exponents of `ln p = a + b ln f + c ln N` for the four atomic examples.
fn dirac(quick: bool, seed: u64) -> CliResult<Experiment> {
    let (ns, fs) = if quick {
        (vec![64, 128], vec![0.05, 0.1, 0.2])
    } else {
        (default_dirac_n_ladder(), default_dirac_f_ladder())
    };
    let qmc = QmcConfig {
        samples: if quick { 1024 } else { 4096 },
        ..QmcConfig::with_seed(seed)
    };
    let (n_top, f_top) = (*ns.last().unwrap(), *fs.last().unwrap());
    let mut rows = Vec::new();
    let mut panels = Vec::new();
    let mut reports = Vec::new();
    for case in DiracCase::ALL {
        let r = dirac_example_check(case, &ns, &fs, &qmc)?;
        let (ef, en) = r.expected;
        let okf = (r.slope_f - ef).abs() <= DIRAC_TOLERANCE;
        let okn = (r.slope_n - en).abs() <= DIRAC_TOLERANCE;
        rows.push(row(
            &format!("dirac-exponents:{}:f", case.name()),
            n_top,
            f_top,
            ef,
            r.slope_f,
            0.0,
            okf,
        ));
        rows.push(row(
            &format!("dirac-exponents:{}:N", case.name()),
            n_top,
            f_top,
            en,
            r.slope_n,
            0.0,
            okn,
        ));
        let top: Vec<&(usize, f64, f64)> = r.points.iter().filter(|p| p.0 == n_top).collect();
        let a = top
            .iter()
            .map(|p| p.2 - ef * p.1.ln() - en * (p.0 as f64).ln())
            .sum::<f64>()
            / top.len() as f64;
        let ln_n = (n_top as f64).ln();
        panels.push(Panel {
            title: format!(
                "{} at N = {n_top}: slopes ({:.2}, {:.2}) vs ({ef}, {en})",
                case.name(),
                r.slope_f,
                r.slope_n
            ),
            x_label: "f".into(),
            y_label: "ln P".into(),
            log_x: true,
            curve: log_grid(fs[0] / 1.2, f_top * 1.2, 30)
                .into_iter()
                .map(|f| (f, a + ef * f.ln() + en * ln_n))
                .collect(),
            points: top.iter().map(|p| (p.1, p.2, 0.0)).collect(),
        });
        reports.push(r);
    }
    let pass = rows.iter().all(|r| r.verdict == Verdict::Pass);
    Ok(Experiment {
        rows,
        panels,
        details: json!({ "reports": to_json(&reports)?, "tolerance": DIRAC_TOLERANCE }),
        pass,
    })
}

/// `ln lambda_1(f)` of the i.i.d. transfer operator against `-pi^2 / (8 f^2)`.
fn transfer(quick: bool) -> CliResult<Experiment> {
    const NODES: usize = 200;
    let sweep: Vec<f64> = if quick {
        vec![2.0, 3.0, 4.0, 6.0, 8.0, 10.0]
    } else {
        (0..=24)
            .map(|i| 2.0 + 0.25 * i as f64)
            .chain([10.0])
            .collect()
    };
    let checked = [(6.0, 0.05), (10.0, 0.02)];
    let mut rates = Vec::new();
    let mut rows = Vec::new();
    for &f in &sweep {
        let t = transfer_rate(f, NODES)?;
        let asym = -KAPPA_HALF / (f * f);
        if let Some(&(_, tol)) = checked.iter().find(|c| c.0 == f) {
            let rel = ((t.c - asym) / asym).abs();
            rows.push(row(
                "transfer",
                1,
                f,
                asym,
                t.c,
                t.err,
                rel < tol && t.err < 1e-8,
            ));
        }
        rates.push(t);
    }
    let pass = rows.iter().all(|r| r.verdict == Verdict::Pass);
    let panels = vec![
        Panel {
            title: "c(f) against -pi^2/(8 f^2)".into(),
            x_label: "f".into(),
            y_label: "ln lambda1".into(),
            log_x: false,
            curve: (0..=40)
                .map(|i| 2.0 + 0.2 * i as f64)
                .map(|f| (f, -KAPPA_HALF / (f * f)))
                .collect(),
            points: rates.iter().map(|t| (t.f, t.c, t.err)).collect(),
        },
        Panel {
            title: "relative gap to the asymptote".into(),
            x_label: "f".into(),
            y_label: "|c / asymptote - 1|".into(),
            log_x: false,
            curve: vec![(2.0, 0.05), (10.0, 0.05)],
            points: rates
                .iter()
                .map(|t| (t.f, (t.c * t.f * t.f / KAPPA_HALF + 1.0).abs(), 0.0))
                .collect(),
        },
    ];
    Ok(Experiment {
        rows,
        panels,
        details: json!({ "nodes": NODES, "rates": to_json(&rates)? }),
        pass,
    })
}

/// Perturbed FGN against FGN at the last schedule level, normalized by `f^{-1/H} N`.
fn counterexample(quick: bool, seed: u64) -> CliResult<Experiment> {
    let mut schedule = PerturbationSchedule::new(
        0.7,
        vec![
            PerturbationLevel { m: 1.1, q: 1, n: 2 },
            PerturbationLevel {
                m: 1.5,
                q: 2,
                n: 256,
            },
        ],
    );
    schedule.boundary_exponent = 0.7;
    let cfg = McConfig {
        samples: if quick { 300_000 } else { 3_000_000 },
        seed,
        ..McConfig::default()
    };
    let r = counterexample_check(&schedule, &cfg)?;
    let err = r.perturbed_err.hypot(r.fgn_err);
    let pass = r.separation >= 3.0;
    let rows = vec![row(
        "counterexample",
        r.n,
        r.f,
        r.fgn,
        r.perturbed,
        err,
        pass,
    )];
    let panels = vec![Panel {
        title: format!("normalized ln P, separation {:.2} errors", r.separation),
        x_label: "0 = FGN, 1 = perturbed".into(),
        y_label: "ln P / (f^(-1/H) N)".into(),
        log_x: false,
        curve: Vec::new(),
        points: vec![(0.0, r.fgn, r.fgn_err), (1.0, r.perturbed, r.perturbed_err)],
    }];
    Ok(Experiment {
        rows,
        panels,
        details: json!({ "schedule": to_json(&schedule)?, "report": to_json(&r)? }),
        pass,
    })
}

/// `kappa_H` from the FGN ladder; at `H = 1/2` the interval must cover `pi^2/8`.
fn kappa(quick: bool, seed: u64, hurst: f64) -> CliResult<Experiment> {
    let mut cfg = KappaConfig::default();
    cfg.qmc.seed = seed;
    if quick {
        cfg.f_ladder = vec![3.0, 4.0, 5.0, 6.0];
        cfg.qmc.samples = 2048;
    }
    let k = estimate_kappa(hurst, &cfg)?;
    let half = hurst == 0.5;
    let narrow = k.half_width() < 0.15;
    let pass = narrow && (!half || (k.ci.0 <= KAPPA_HALF && KAPPA_HALF <= k.ci.1));
    let predicted = if half { KAPPA_HALF } else { f64::NAN };
    let f_top = cfg.f_ladder.iter().copied().fold(0.0, f64::max);
    let n_top = k.rungs.iter().map(|r| r.horizons.1).max().unwrap_or(0);
    let rows = vec![row(
        "kappa",
        n_top,
        f_top,
        predicted,
        k.value,
        k.half_width(),
        pass,
    )];
    let mut points: Vec<(f64, f64, f64)> =
        k.rungs.iter().map(|r| (1.0 / r.f, r.rate, r.err)).collect();
    points.push((0.0, k.value, k.half_width()));
    let x_hi = 1.0 / cfg.f_ladder.iter().copied().fold(f64::INFINITY, f64::min);
    let panels = vec![Panel {
        title: format!(
            "kappa at H = {hurst}: {:.4} in [{:.4}, {:.4}]",
            k.value, k.ci.0, k.ci.1
        ),
        x_label: "1/f".into(),
        y_label: "rate".into(),
        log_x: false,
        curve: if half {
            vec![(0.0, KAPPA_HALF), (x_hi, KAPPA_HALF)]
        } else {
            Vec::new()
        },
        points,
    }];
    Ok(Experiment {
        rows,
        panels,
        details: json!({ "estimate": to_json(&k)? }),
        pass,
    })
}

#[derive(Serialize)]
struct ReproduceReport<'a> {
    preset: Preset,
    quick: bool,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    hurst: Option<f64>,
    rows: &'a [ReportRow],
    details: &'a Value,
    pass: bool,
}

/// `panel,series,x,y,err` lines for the SVG comment block.
fn data_table(panels: &[Panel]) -> String {
    let mut s = String::from("panel,series,x,y,err\n");
    for (i, p) in panels.iter().enumerate() {
        for (x, y) in &p.curve {
            s.push_str(&format!("{i},predicted,{x:.8e},{y:.8e},\n"));
        }
        for (x, y, e) in &p.points {
            s.push_str(&format!("{i},measured,{x:.8e},{y:.8e},{e:.3e}\n"));
        }
    }
    s
}

pub fn run(ctx: &Context, preset: Preset, quick: bool, hurst: f64) -> CliResult<Outcome> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(CliError::Usage(format!(
            "--hurst must lie in (0, 1), got {hurst}"
        )));
    }
    if preset != Preset::Kappa && hurst != 0.5 {
        log::warn!("--hurst only affects the kappa preset");
    }
    let cfg = ctx.optional_config()?;
    let out = ctx.out_dir(cfg.as_ref())?;
    let seed = ctx.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let exp = match preset {
        Preset::Mogulskii => mogulskii(quick, seed)?,
        Preset::Szego => szego(quick, seed)?,
        Preset::Dirac => dirac(quick, seed)?,
        Preset::Transfer => transfer(quick)?,
        Preset::Counterexample => counterexample(quick, seed)?,
        Preset::Kappa => kappa(quick, seed, hurst)?,
    };
    let mut csv = Vec::new();
    write_report_csv(&exp.rows, &mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    let name = preset.name();
    out.write(&format!("{name}.csv"), &csv)?;
    let svg = plot::render(&exp.panels, &data_table(&exp.panels));
    out.write(&format!("{name}.svg"), svg.as_bytes())?;
    let report = ReproduceReport {
        preset,
        quick,
        seed,
        hurst: (preset == Preset::Kappa).then_some(hurst),
        rows: &exp.rows,
        details: &exp.details,
        pass: exp.pass,
    };
    out.write_result(&format!("{name}.json"), "reproduce", &report)?;
    println!("{name}: {}", if exp.pass { "PASS" } else { "FAIL" });
    Ok(Outcome::from_bool(exp.pass))
}
