use proptest::prelude::*;

use rwre_core::stats::{
    batch_means, clt_diagnostic, hill, ks_two_sample, moment_verdict, wilson, Interval, MomentVerdict, TailIndexEstimate,
};

fn points(walks: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, d), walks)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clt_covariance_is_symmetric_and_psd(a in points(200, 3), b in points(200, 3)) {
        let c = clt_diagnostic(&a, &b, 10, &[0.0; 3]).unwrap();
        for cov in [&c.covariance_n, &c.covariance_4n] {
            for i in 0..3 {
                prop_assert!(cov[i * 3 + i] >= 0.0);
                for j in 0..3 {
                    prop_assert_eq!(cov[i * 3 + j], cov[j * 3 + i]);
                }
            }
        }
        prop_assert!(c.min_eigenvalue >= -1e-9);
    }

    #[test]
    fn hill_is_scale_invariant(xs in proptest::collection::vec(1.0f64..1e6, 100..400), c in 1e-3f64..1e3) {
        let a = hill(&xs, None).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
        let b = hill(&scaled, None).unwrap();
        prop_assert!((a.index - b.index).abs() <= 1e-9 * a.index);
        prop_assert!(a.ci.lo < a.index && a.index < a.ci.hi);
    }

    #[test]
    fn verdicts_are_monotone_in_alpha(index in 0.1f64..5.0, k in 10usize..10_000, alpha in 0.05f64..5.0) {
        let w = 1.96 / (k as f64).sqrt();
        let est = TailIndexEstimate {
            index,
            ci: Interval::new(index * (1.0 - w), index * (1.0 + w)),
            k,
            n: k * k,
        };
        // a moment that looks infinite stays so for larger orders, and a
        // finite one stays finite for smaller orders
        match moment_verdict(&est, alpha) {
            MomentVerdict::MomentAppearsInfinite => prop_assert_eq!(moment_verdict(&est, alpha * 1.5), MomentVerdict::MomentAppearsInfinite),
            MomentVerdict::MomentAppearsFinite => prop_assert_eq!(moment_verdict(&est, alpha / 1.5), MomentVerdict::MomentAppearsFinite),
            MomentVerdict::Inconclusive => {}
        }
    }

    #[test]
    fn wilson_contains_the_point_estimate(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac) as u64;
        let ci = wilson(s, n, 1.96);
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= ci.lo && ci.lo <= p + 1e-15 && p <= ci.hi + 1e-15 && ci.hi <= 1.0);
    }

    #[test]
    fn ks_statistic_is_symmetric_and_bounded(a in proptest::collection::vec(-1e3f64..1e3, 5..200), b in proptest::collection::vec(-1e3f64..1e3, 5..200)) {
        let x = ks_two_sample(&a, &b).unwrap();
        let y = ks_two_sample(&b, &a).unwrap();
        prop_assert!((x.statistic - y.statistic).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&x.statistic));
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
    }

    #[test]
    fn batch_means_recovers_the_sample_mean(xs in proptest::collection::vec(-1e3f64..1e3, 64..512)) {
        let n = xs.len() - xs.len() % 32;
        let m = batch_means(&xs[..n], 32).unwrap();
        let direct = xs[..n].iter().sum::<f64>() / n as f64;
        prop_assert!((m.mean - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        prop_assert!(m.ci.contains(m.mean));
    }
}
