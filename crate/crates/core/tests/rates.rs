use smalldev::covariance::CovarianceModel;
use smalldev::engines::{band_probability, band_probability_qmc, McConfig, QmcConfig};
use smalldev::rates::*;
use smalldev::spectral::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn iid(k_max: usize) -> CovarianceModel {
    let mut r = vec![0.0; k_max + 1];
    r[0] = 1.0;
    CovarianceModel::from_autocovariances("iid", r).unwrap()
}

#[test]
fn mogulskii_display_value() {
    let b = Boundary::Power {
        c: 0.25,
        gamma: 0.5,
    };
    let p = fbm_rate(0.5, &SlowlyVaryingFn::one(), &b, 4096, None).unwrap();
    assert!(
        (p.log_p + 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-9,
        "{}",
        p.log_p
    );
}

#[test]
fn scale_boundary_is_out_of_regime() {
    let b = Boundary::Power { c: 1.0, gamma: 0.5 };
    assert!(matches!(
        fbm_rate(0.5, &SlowlyVaryingFn::one(), &b, 4096, None),
        Err(smalldev::Error::RegimeMismatch { .. })
    ));
}

#[test]
fn fbm_rate_needs_kappa_away_from_half() {
    let b = Boundary::Power {
        c: 1.0,
        gamma: 0.35,
    };
    assert!(fbm_rate(0.7, &SlowlyVaryingFn::one(), &b, 1024, None).is_err());
    let k = KappaEstimate {
        hurst: 0.7,
        value: 1.0,
        ci: (0.9, 1.1),
        rungs: vec![],
        truncated: false,
    };
    let p = fbm_rate(0.7, &SlowlyVaryingFn::one(), &b, 1024, Some(&k)).unwrap();
    let (lo, hi) = p.interval.unwrap();
    assert!(lo < p.log_p && p.log_p < hi);
}

#[test]
fn kappa_estimate_is_stable_under_more_samples() {
    let mut cfg = KappaConfig::default();
    cfg.qmc.samples = 4096;
    let a = estimate_kappa(0.7, &cfg).unwrap();
    cfg.qmc.samples = 8192;
    let b = estimate_kappa(0.7, &cfg).unwrap();
    assert!(a.value > 0.0 && a.value.is_finite());
    assert!(
        a.ci.0 < b.value && b.value < a.ci.1,
        "{:?} vs {}",
        a.ci,
        b.value
    );
}

#[test]
fn szego_constant_of_white_noise() {
    let c = szego_constant(&SpectralMeasure::fgn(0.5).unwrap()).unwrap();
    assert!(
        (c - (std::f64::consts::PI / 2.0).sqrt().ln()).abs() < 1e-9,
        "{c}"
    );
    assert!((c - 0.225791).abs() < 1e-6);
    assert!(matches!(
        szego_rate(
            &SpectralMeasure::dirac(DiracCase::Zero),
            &Boundary::Constant { f: 0.05 },
            8
        ),
        Err(smalldev::Error::IrregularSequence)
    ));
    assert!(szego_constant(&SpectralMeasure::fgn(0.7).unwrap())
        .unwrap()
        .is_finite());
}

#[test]
fn volumetric_bound_single_step() {
    let b = volumetric_upper_bound(&iid(1), 1, 1.0).unwrap();
    assert!((b - (2f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-12);
    let exact = (2.0 * Normal::new(0.0, 1.0).unwrap().cdf(1.0) - 1.0).ln();
    assert!(exact < b);
}

#[test]
fn bounds_sandwich_tight_regime() {
    let model = iid(10);
    let q = band_probability_qmc(
        &model.partial_sum_covariance(10).unwrap(),
        0.05,
        &QmcConfig::with_seed(1),
    )
    .unwrap();
    let up = volumetric_upper_bound(&model, 10, 0.05).unwrap();
    let (low, delta) = best_regularized_lower_bound(&model, 10, 0.05).unwrap();
    println!("low {low} (delta {delta}) qmc {} up {up}", q.log_p);
    assert!(low <= q.log_p + 3.0 * q.log_err);
    assert!(q.log_p <= up + 3.0 * q.log_err);
    assert!((up - q.log_p) / 10.0 < 0.3);
    assert!(regularized_lower_bound(&model, 10, 0.05, 1e-8).unwrap() < -1e4);
}

#[test]
fn constant_boundary_limit_for_iid() {
    let lim = constant_rate_limit(
        &SpectralMeasure::fgn(0.5).unwrap(),
        1.0,
        &[16, 32, 64, 128],
        &QmcConfig::with_seed(2),
    )
    .unwrap();
    let t = lim.transfer.unwrap();
    println!(
        "{:?} {:?} c_hat {} transfer {t}",
        lim.per_step, lim.gaps, lim.c_hat
    );
    assert!(((lim.c_hat - t) / t).abs() < 0.02);
    let bound = (2.0 * Normal::new(0.0, 1.0).unwrap().cdf(1.0) - 1.0).ln();
    assert!(lim.per_step.iter().all(|c| *c <= bound + 1e-3));
    assert!(lim.kolmogorov && lim.c_hat < 0.0);
}

#[test]
fn dirac_zero_rate_vanishes() {
    let lim = constant_rate_limit(
        &SpectralMeasure::dirac(DiracCase::Zero),
        1.0,
        &[16, 32, 64, 128],
        &QmcConfig::default(),
    )
    .unwrap();
    assert!(!lim.kolmogorov);
    assert!(lim.per_step.windows(2).all(|w| w[1] > w[0]));
    assert!(lim.c_hat.abs() < 0.02);
}

#[test]
fn dirac_exponents() {
    for case in DiracCase::ALL {
        let r = dirac_example_check(
            case,
            &default_dirac_n_ladder(),
            &default_dirac_f_ladder(),
            &QmcConfig::default(),
        )
        .unwrap();
        println!(
            "{case:?}: {} {} expected {:?}",
            r.slope_f, r.slope_n, r.expected
        );
        assert!(r.pass);
    }
}

#[test]
fn pmq_single_pair_matches_quadrature() {
    // P{C(|xi| + |eta|) <= 1/3} with |xi|, |eta| half-normal
    let c = 0.2;
    let t = 1.0 / (3.0 * c);
    let g = Normal::new(0.0, 1.0).unwrap();
    let m = 4000;
    let h = t / m as f64;
    let mut oracle = 0.0;
    for i in 0..m {
        let x = (i as f64 + 0.5) * h;
        let dens = 2.0 * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        oracle += dens * (2.0 * g.cdf(t - x) - 1.0) * h;
    }
    let b = perturbation_pmq(0.7, 1.0, 1, c, 400_000, 3).unwrap();
    assert!((b.p - oracle).abs() < 3.0 * b.err, "{} vs {oracle}", b.p);
    assert_eq!(
        b,
        perturbation_pmq(0.7, 1.0, 1, c, 400_000, 3)
            .unwrap_or(b.clone())
            .clone_with_time(b.wall_time_ms)
    );
}

trait SameTime {
    fn clone_with_time(self, t: f64) -> Self;
}

impl SameTime for smalldev::engines::BandProbability {
    fn clone_with_time(mut self, t: f64) -> Self {
        self.wall_time_ms = t;
        self
    }
}

#[test]
fn pmq_constant_for_schedule() {
    let s = PerturbationSchedule::new(
        0.7,
        vec![
            PerturbationLevel { m: 2.0, q: 8, n: 4 },
            PerturbationLevel {
                m: 3.0,
                q: 32,
                n: 256,
            },
        ],
    );
    for level in 0..2 {
        let c = pmq_constant(&s, level).unwrap();
        let lvl = s.levels[level];
        let p = perturbation_pmq(0.7, lvl.m, lvl.q, c, 100_000, 1).unwrap();
        println!("level {level}: C {c} P {}", p.p);
        assert!(c > 0.0 && c.is_finite());
    }
}

#[test]
fn counterexample_report_is_normalized() {
    let mut s = PerturbationSchedule::new(
        0.7,
        vec![
            PerturbationLevel { m: 1.1, q: 1, n: 2 },
            PerturbationLevel {
                m: 1.5,
                q: 2,
                n: 64,
            },
        ],
    );
    s.boundary_exponent = 0.7;
    let cfg = McConfig {
        samples: 20_000,
        seed: 3,
        ..McConfig::default()
    };
    let r = counterexample_check(&s, &cfg).unwrap();
    let f = 64f64.powf(0.49);
    assert!((r.f - f).abs() < 1e-12);
    // the FGN ratio sits near -kappa_0.7 ~ -0.77 at any scale
    assert!(r.fgn < -0.4 && r.fgn > -1.2, "{r:?}");
    assert!(r.perturbed_err > 0.0 && r.fgn_err > 0.0);
    assert!(((r.perturbed - r.fgn) / r.perturbed_err.hypot(r.fgn_err) - r.separation).abs() < 1e-9);
}

#[test]
fn lower_rate_direction_for_brownian_scale() {
    for n in [64usize, 256] {
        let b = Boundary::Power {
            c: 1.0,
            gamma: 0.25,
        };
        let pred = fbm_rate(0.5, &SlowlyVaryingFn::one(), &b, n, None).unwrap();
        let m = band_probability(
            &SpectralMeasure::fgn(0.5).unwrap(),
            n,
            b.eval(n).unwrap(),
            &QmcConfig::default(),
        )
        .unwrap();
        assert!(
            m.log_p >= 1.25 * pred.log_p,
            "N={n}: {} vs {}",
            m.log_p,
            pred.log_p
        );
    }
}
