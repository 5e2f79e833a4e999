use smalldev::covariance::CovarianceModel;
use smalldev::engines::*;
use smalldev::spectral::{DiracCase, SpectralMeasure};
use statrs::distribution::{ContinuousCDF, Normal};

fn iid(k_max: usize) -> CovarianceModel {
    let mut r = vec![0.0; k_max + 1];
    r[0] = 1.0;
    CovarianceModel::from_autocovariances("iid", r).unwrap()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

#[test]
fn iid_two_steps_match_one_dimensional_integral() {
    // int_{-1}^{1} phi(x) (Phi(1 - x) - Phi(-1 - x)) dx by composite Simpson
    let g = std_normal();
    let h = |x: f64| {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
            * (g.cdf(1.0 - x) - g.cdf(-1.0 - x))
    };
    let m = 20_000;
    let step = 2.0 / m as f64;
    let mut oracle = h(-1.0) + h(1.0);
    for i in 1..m {
        oracle += if i % 2 == 1 { 4.0 } else { 2.0 } * h(-1.0 + i as f64 * step);
    }
    oracle *= step / 3.0;

    let sigma = iid(2).partial_sum_covariance(2).unwrap();
    let b = band_probability_qmc(&sigma, 1.0, &QmcConfig::with_seed(3)).unwrap();
    assert!(
        (b.p - oracle).abs() < 3.0 * b.err.max(1e-12),
        "{} vs {oracle} (err {})",
        b.p,
        b.err
    );
    assert!((b.p - oracle).abs() < 1e-5);
}

#[test]
fn dirac_zero_reduces_to_one_normal() {
    let b = band_probability_reduction(
        &SpectralMeasure::dirac(DiracCase::Zero),
        10,
        0.5,
        &QmcConfig::default(),
    )
    .unwrap();
    let exact = 2.0 * std_normal().cdf(0.05) - 1.0;
    assert!((b.p - exact).abs() < 1e-12);
    assert!((b.p - 0.039878).abs() < 1e-6);
}

#[test]
fn qmc_refuses_atomic_covariance() {
    let model = CovarianceModel::from_measure(&SpectralMeasure::dirac(DiracCase::Zero), 8).unwrap();
    let sigma = model.partial_sum_covariance(8).unwrap();
    assert!(matches!(
        band_probability_qmc(&sigma, 1.0, &QmcConfig::default()),
        Err(smalldev::Error::DegenerateCovariance)
    ));
}

#[test]
fn monte_carlo_agrees_with_qmc_for_iid() {
    let model = iid(16);
    let q = band_probability_qmc(
        &model.partial_sum_covariance(16).unwrap(),
        4.0,
        &QmcConfig::with_seed(1),
    )
    .unwrap();
    let cfg = McConfig {
        samples: 200_000,
        seed: 2,
        ..McConfig::default()
    };
    let m = band_probability_mc(&model, 16, 4.0, &cfg).unwrap();
    let combined = (q.err.powi(2) + m.err.powi(2)).sqrt();
    assert!(
        (q.p - m.p).abs() < 3.0 * combined,
        "qmc {} mc {} (se {combined})",
        q.p,
        m.p
    );
}

#[test]
fn fgn_monte_carlo_is_seed_consistent() {
    let model = CovarianceModel::from_measure(&SpectralMeasure::fgn(0.7).unwrap(), 64).unwrap();
    let run = |seed| {
        band_probability_mc(
            &model,
            64,
            8.0,
            &McConfig {
                samples: 100_000,
                seed,
                ..McConfig::default()
            },
        )
        .unwrap()
    };
    let (a, b) = (run(10), run(11));
    assert!(a.p > 0.0 && a.p < 1.0);
    assert!((a.p - b.p).abs() < 3.0 * (a.err.powi(2) + b.err.powi(2)).sqrt());
}

#[test]
fn nyquist_atom_probability_does_not_depend_on_horizon() {
    let model =
        CovarianceModel::from_measure(&SpectralMeasure::dirac(DiracCase::Nyquist), 101).unwrap();
    let exact = 2.0 * std_normal().cdf(1.0) - 1.0;
    for n in [100, 101] {
        let b = band_probability_mc(
            &model,
            n,
            1.0,
            &McConfig {
                samples: 50_000,
                seed: n as u64,
                ..McConfig::default()
            },
        )
        .unwrap();
        assert!(
            (b.p - exact).abs() < 3.0 * b.err,
            "N={n}: {} vs {exact}",
            b.p
        );
    }
}

#[test]
fn engines_do_not_depend_on_thread_count() {
    let model = CovarianceModel::from_measure(&SpectralMeasure::fgn(0.3).unwrap(), 24).unwrap();
    let sigma = model.partial_sum_covariance(24).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let q = band_probability_qmc(&sigma, 1.5, &QmcConfig::with_seed(5)).unwrap();
                let m = band_probability_mc(
                    &model,
                    24,
                    1.5,
                    &McConfig {
                        samples: 5000,
                        seed: 5,
                        ..McConfig::default()
                    },
                )
                .unwrap();
                (q.log_p, q.err, m.p)
            })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn conditional_variance_bound_holds_for_iid() {
    let g = std_normal();
    for (n, f) in [(8, 0.5), (16, 1.0), (32, 2.0)] {
        let b = band_probability_qmc(
            &iid(n).partial_sum_covariance(n).unwrap(),
            f,
            &QmcConfig::with_seed(n as u64),
        )
        .unwrap();
        let bound = n as f64 * (2.0 * g.cdf(f) - 1.0).ln();
        assert!(
            b.log_p <= bound + 3.0 * b.log_err,
            "N={n} f={f}: {} > {bound}",
            b.log_p
        );
    }
}

#[test]
fn transfer_rate_is_monotone_and_stable() {
    let c: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&f| transfer_rate(f, 200).unwrap().c)
        .collect();
    assert!(c[0] < c[1] && c[1] < c[2] && c[2] < 0.0, "{c:?}");
    for f in [1.0, 6.0, 10.0] {
        let t = transfer_rate(f, 200).unwrap();
        assert!(t.err < 1e-8, "f={f}: {}", t.err);
        assert!(t.gap_ratio > 0.0 && t.gap_ratio < 1.0);
    }
}

#[test]
fn transfer_rate_matches_qmc_ladder() {
    let t = transfer_rate(1.0, 200).unwrap();
    let cfg = QmcConfig::with_seed(9);
    let lp = |n: usize| {
        band_probability_qmc(&iid(n).partial_sum_covariance(n).unwrap(), 1.0, &cfg)
            .unwrap()
            .log_p
    };
    let slope = (lp(128) - lp(64)) / 64.0;
    assert!(((slope - t.c) / t.c).abs() < 0.02, "{slope} vs {}", t.c);
}

#[test]
fn probability_is_monotone_in_f() {
    let sigma = CovarianceModel::from_measure(&SpectralMeasure::fgn(0.7).unwrap(), 32)
        .unwrap()
        .partial_sum_covariance(32)
        .unwrap();
    let cfg = QmcConfig::with_seed(4);
    let ps: Vec<_> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&f| band_probability_qmc(&sigma, f, &cfg).unwrap())
        .collect();
    for w in ps.windows(2) {
        assert!(w[0].p <= w[1].p + 3.0 * (w[0].err + w[1].err));
        assert!(w[1].log_p <= 0.0);
    }
}

#[test]
fn result_json_has_documented_fields() {
    let b = band_probability_reduction(
        &SpectralMeasure::dirac(DiracCase::Zero),
        4,
        1.0,
        &QmcConfig::default(),
    )
    .unwrap();
    let v: serde_json::Value = serde_json::to_value(&b).unwrap();
    for key in [
        "method",
        "N",
        "f",
        "log_p",
        "p",
        "err",
        "seed",
        "wall_time_ms",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["method"], "reduction");
}

#[test]
fn transfer_iteration_matches_qmc_for_iid() {
    let model =
        CovarianceModel::from_measure(&SpectralMeasure::white_noise(1.0).unwrap(), 16).unwrap();
    let q = band_probability_qmc(
        &model.partial_sum_covariance(16).unwrap(),
        2.0,
        &QmcConfig::default(),
    )
    .unwrap();
    let t = transfer_probability(16, 2.0, 64).unwrap();
    assert!(t.log_err < 1e-10, "{}", t.log_err);
    assert!(
        (q.log_p - t.log_p).abs() < 3.0 * q.log_err + 1e-9,
        "{} vs {}",
        q.log_p,
        t.log_p
    );
}
