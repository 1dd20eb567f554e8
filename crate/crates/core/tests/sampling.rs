use pd_lab::sampling::{
    cdf_max_stick, choose_truncation, draw_sticks, gem_to_ranked, map_streams, residual_bound, sample_batch,
    SamplerConfig, StickSequence, Truncation,
};
use pd_lab::stats::{ks_distance, mean, std_err};
use proptest::prelude::*;

proptest! {
    #[test]
    fn frequencies_and_residual_partition_unit_mass(
        theta in 0.1f64..50.0,
        sticks in prop::collection::vec(0.0f64..0.999, 0..64),
    ) {
        let seq = StickSequence::from_sticks(theta, &sticks).unwrap();
        let total: f64 = seq.freqs.iter().sum::<f64>() + seq.residual;
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut w = 1.0;
        for (u, x) in seq.sticks.iter().zip(&seq.freqs) {
            prop_assert!((x - w * u).abs() <= 1e-15);
            w *= 1.0 - u;
        }
        prop_assert!((seq.residual - w).abs() <= 1e-15);
    }

    #[test]
    fn ranking_is_a_descending_permutation(theta in 0.2f64..30.0, seed in any::<u64>(), n in 1usize..200) {
        let cfg = SamplerConfig::new(theta, seed);
        let seq = draw_sticks(&cfg, n).unwrap();
        let ranked = gem_to_ranked(&seq);
        prop_assert!(ranked.p.windows(2).all(|w| w[0] >= w[1]));
        let mut a = seq.freqs.clone();
        let mut b = ranked.p.clone();
        a.sort_by(|x, y| x.total_cmp(y));
        b.sort_by(|x, y| x.total_cmp(y));
        prop_assert_eq!(a, b);
        prop_assert_eq!(ranked.residual, seq.residual);
    }

    #[test]
    fn draws_are_deterministic(theta in 0.2f64..30.0, seed in any::<u64>(), stream in any::<u64>()) {
        let cfg = SamplerConfig::new(theta, seed).with_stream(stream);
        prop_assert_eq!(draw_sticks(&cfg, 50).unwrap(), draw_sticks(&cfg, 50).unwrap());
    }

    #[test]
    fn residual_bound_decreases_with_sticks(theta in 0.1f64..20.0, n in 1usize..400, delta in 0.01f64..1.0) {
        let a = residual_bound(theta, n, delta);
        let b = residual_bound(theta, n + 1, delta);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
    }

    #[test]
    fn truncation_is_minimal(theta in 0.1f64..20.0, eps_exp in 1i32..14, delta in 0.01f64..1.0) {
        let eps = 10f64.powi(-eps_exp);
        let n = choose_truncation(theta, eps, delta);
        prop_assert!(residual_bound(theta, n, delta) <= eps);
        prop_assert!(n == 1 || residual_bound(theta, n - 1, delta) > eps);
    }

    #[test]
    fn max_stick_cdf_is_a_cdf(theta in 0.1f64..20.0, n in 1usize..50, x in 0.0f64..1.0, dx in 0.0f64..0.5) {
        let a = cdf_max_stick(x, n, theta);
        let b = cdf_max_stick((x + dx).min(1.0), n, theta);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a);
    }
}

#[test]
fn spec_arithmetic_examples() {
    let seq = StickSequence::from_sticks(1.0, &[0.5, 0.5]).unwrap();
    assert_eq!(seq.freqs, vec![0.5, 0.25]);
    assert_eq!(seq.residual, 0.25);
    let seq = StickSequence::from_sticks(1.0, &[0.0; 4]).unwrap();
    assert!(seq.freqs.iter().all(|&x| x == 0.0));
    assert_eq!(seq.residual, 1.0);
    assert_eq!(residual_bound(1.0, 10, 0.5), 2f64.powi(-9));
    assert_eq!(residual_bound(3.0, 7, 1.0), 0.5f64.powi(7));
    assert_eq!(choose_truncation(1.0, 2f64.powi(-9), 0.5), 10);
    assert_eq!(choose_truncation(5.0, 1.0, 0.5), 1);
    assert_eq!(cdf_max_stick(0.0, 3, 2.0), 0.0);
    assert!((cdf_max_stick(0.5, 1, 1.0) - 0.5).abs() < 1e-15);
    assert!((cdf_max_stick(0.5, 2, 2.0) - 0.5625).abs() < 1e-15);
}

#[test]
fn non_positive_theta_is_rejected() {
    for theta in [0.0, -1.0, f64::NAN] {
        assert!(draw_sticks(&SamplerConfig::new(theta, 1), 5).is_err());
    }
}

#[test]
fn max_stick_matches_exact_cdf() {
    let (theta, n) = (2.0, 2);
    let cfg = SamplerConfig::new(theta, 11);
    let maxima = map_streams(&cfg, 100_000, |_, s| {
        let a = s.next_stick().0;
        let b = s.next_stick().0;
        a.max(b)
    })
    .unwrap();
    let d = ks_distance(&maxima, |x| cdf_max_stick(x, n, theta));
    // 1.63/sqrt(N) is the 1% critical value.
    assert!(d < 1.63 / (maxima.len() as f64).sqrt(), "KS {d}");
}

#[test]
fn first_frequency_has_beta_mean() {
    let cfg = SamplerConfig::new(4.0, 3);
    let first = map_streams(&cfg, 100_000, |_, s| s.next_stick().1).unwrap();
    let (m, se) = (mean(&first), std_err(&first));
    assert!((m - 0.2).abs() < 3.0 * se, "{m} +/- {se}");
}

#[test]
fn tilt_identity_for_first_stick() {
    let theta = 3.0;
    let cfg = SamplerConfig::new(theta, 5);
    let v = map_streams(&cfg, 100_000, |_, s| (1.0 - s.next_stick().0).powf(theta)).unwrap();
    assert!((mean(&v) - 0.5).abs() < 3.0 * std_err(&v));
}

#[test]
fn residual_is_small_under_default_truncation() {
    let cfg = SamplerConfig::new(10.0, 9);
    let batch = sample_batch(&cfg, 2000).unwrap();
    assert!(batch.iter().all(|s| s.residual < 1e-9));
    assert!(batch.iter().all(|s| (s.mass() + s.residual - 1.0).abs() < 1e-9));
}

#[test]
fn batches_do_not_depend_on_thread_count() {
    let cfg = SamplerConfig::new(7.0, 42).with_truncation(Truncation::Fixed(300));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_batch(&cfg, 500).unwrap())
    };
    assert_eq!(run(1), run(4));
}
