use proptest::prelude::*;
use smalldev::covariance::CovarianceModel;
use smalldev::engines::{band_probability_qmc, box_probability_qmc, QmcConfig};
use smalldev::properties::*;
use smalldev::spectral::SpectralMeasure;
use statrs::distribution::{ContinuousCDF, Normal};

fn quick(seed: u64) -> PropertyConfig {
    PropertyConfig {
        trials: 3,
        paths: 4000,
        seed,
        ..PropertyConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn every_suite_holds_for_random_seeds(seed in any::<u64>()) {
        for r in run_all(&quick(seed)).unwrap() {
            prop_assert!(r.pass, "{:?}", r);
        }
    }

    #[test]
    fn independent_coordinates_factorize(a in 0.2f64..3.0, b in 0.2f64..3.0) {
        // for a diagonal covariance the correlation inequality is an equality
        let m = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
        let joint = box_probability_qmc(&m, &[a, b], &QmcConfig::default()).unwrap();
        let z = Normal::standard();
        let exact = (2.0 * z.cdf(a) - 1.0).ln() + (2.0 * z.cdf(b / 2.0) - 1.0).ln();
        prop_assert!((joint.log_p - exact).abs() < 1e-6, "{} vs {}", joint.log_p, exact);
    }

    #[test]
    fn band_probability_is_log_concave_in_f(h in 0.2f64..0.9, n in 2usize..12, f in 0.2f64..2.0, step in 0.05f64..1.0) {
        let model = CovarianceModel::from_measure(&SpectralMeasure::fgn(h).unwrap(), n).unwrap();
        let sigma = model.partial_sum_covariance(n).unwrap();
        let cfg = QmcConfig::default();
        let p: Vec<f64> = (0..3)
            .map(|i| band_probability_qmc(&sigma, f + i as f64 * step, &cfg).unwrap().log_p)
            .collect();
        prop_assert!(p[1] >= 0.5 * (p[0] + p[2]) - 1e-3, "{p:?}");
        prop_assert!(p[0] <= p[1] && p[1] <= p[2]);
    }
}

#[test]
fn suites_are_deterministic_in_the_seed() {
    let a = run_suite(Suite::Anderson, &quick(11)).unwrap();
    let b = run_suite(Suite::Anderson, &quick(11)).unwrap();
    assert_eq!(a, b);
    let c = run_suite(Suite::Anderson, &quick(12)).unwrap();
    assert_ne!(a.trials, c.trials);
}

#[test]
fn ks_critical_value_shrinks_with_sample_size() {
    assert!(ks_critical(10_000, 1e-3) < ks_critical(1000, 1e-3));
    // tabulated c(0.001) = 1.949 for the two-sample statistic
    assert!((ks_critical(2, 1e-3) - 1.9495).abs() < 1e-3);
}
