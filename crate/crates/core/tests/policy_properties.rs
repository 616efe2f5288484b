use onemax_core::kernel::hypergeometric_transition;
use onemax_core::policy::{
    k_drift_table, k_opt_table, p_drift_table, p_opt_table, static_opt_rate, OptimizerConfig, PolicyTable,
    PolicyValues, RateFamily,
};
use onemax_core::runtime::{remaining_times, total_expected_time};
use proptest::prelude::*;

fn strengths(t: &PolicyTable) -> &[usize] {
    match &t.values {
        PolicyValues::Strengths(ks) => ks,
        PolicyValues::Rates(_) => panic!("expected strengths"),
    }
}

fn rates(t: &PolicyTable) -> &[f64] {
    match &t.values {
        PolicyValues::Rates(ps) => ps,
        PolicyValues::Strengths(_) => panic!("expected rates"),
    }
}

/// Remaining time at `l` when flipping `k` bits once and then following
/// `times`, with the self-loop resolved.
fn time_with_strength(n: usize, l: usize, k: usize, times: &[f64]) -> f64 {
    let d = hypergeometric_transition(n, l, k).unwrap();
    let (mut improve, mut weighted) = (0.0, 0.0);
    for (i, m) in d.iter().filter(|&(i, _)| i > l) {
        improve += m;
        weighted += m * times[i];
    }
    if improve == 0.0 {
        f64::INFINITY
    } else {
        (1.0 + weighted) / improve
    }
}

#[test]
fn drift_strengths_are_odd_except_flip_all() {
    // 2k flips have strictly less drift than 2k + 1 flips whenever 2k + 1 <= n
    for n in 3..=200 {
        let t = k_drift_table(n).unwrap();
        for (l, &k) in strengths(&t).iter().enumerate() {
            assert!(k % 2 == 1 || k == n, "n={n} l={l} k={k}");
        }
    }
}

#[test]
fn flipping_two_bits_can_be_optimal() {
    let (t, _) = k_opt_table(3).unwrap();
    assert_eq!(strengths(&t)[1], 2);
}

#[test]
fn optimal_strength_beats_every_alternative() {
    for n in [1usize, 2, 5, 10, 17, 40, 64, 100] {
        let (t, rt) = k_opt_table(n).unwrap();
        for l in 0..n {
            let chosen = rt.times[l];
            for k in 1..=n {
                let alt = time_with_strength(n, l, k, &rt.times);
                assert!(chosen <= alt * (1.0 + 1e-12), "n={n} l={l} k={k}: {chosen} > {alt}");
            }
            let own = time_with_strength(n, l, strengths(&t)[l], &rt.times);
            assert!((own - chosen).abs() <= 1e-10 * chosen);
        }
    }
}

fn check_crossing(n: usize) {
    let (opt, _) = k_opt_table(n).unwrap();
    let drift = k_drift_table(n).unwrap();
    let (ko, kd) = (strengths(&opt), strengths(&drift));
    for l in 0..n {
        if 2 * l < n {
            assert!(ko[l] <= kd[l], "n={n} l={l}: {} > {}", ko[l], kd[l]);
        } else if 2 * l > n {
            assert!(ko[l] >= kd[l], "n={n} l={l}: {} < {}", ko[l], kd[l]);
        }
    }
}

#[test]
fn optimal_and_drift_strengths_cross_at_half() {
    check_crossing(100);
    check_crossing(1000);
}

#[test]
fn optimal_strength_stays_close_to_scaled_optimal_rate() {
    // absolute bound where strengths are small; near the flip-all
    // threshold k overshoots n p by up to two bits, so only a relative
    // bound holds there
    let n = 1000;
    let (ks, _) = k_opt_table(n).unwrap();
    let (ps, _) = p_opt_table(n, RateFamily::Binomial, 0.0, &OptimizerConfig::default()).unwrap();
    for (l, (&k, &p)) in strengths(&ks).iter().zip(rates(&ps)).enumerate() {
        let np = n as f64 * p;
        if k <= n / 10 {
            assert!(k as f64 <= np + 0.5, "l={l}: k={k} np={np}");
        }
        if k < n {
            assert!(k as f64 <= 1.005 * np + 0.5, "l={l}: k={k} np={np}");
        }
    }
}

#[test]
fn optimal_tables_dominate_drift_tables_levelwise() {
    let cfg = OptimizerConfig::default();
    for n in [10usize, 100, 1000] {
        let (_, opt) = k_opt_table(n).unwrap();
        let drift = remaining_times(n, &k_drift_table(n).unwrap(), None).unwrap();
        for l in 0..=n {
            assert!(opt.times[l] <= drift.times[l] + 1e-9, "rls n={n} l={l}");
        }
    }
    for n in [10usize, 100, 300] {
        for family in [RateFamily::Binomial, RateFamily::ConditionalBinomial] {
            let (_, opt) = p_opt_table(n, family, 0.0, &cfg).unwrap();
            let drift = remaining_times(n, &p_drift_table(n, family, 0.0, &cfg).unwrap(), None).unwrap();
            for l in 0..=n {
                assert!(opt.times[l] <= drift.times[l] * (1.0 + 1e-9) + 1e-9, "{family:?} n={n} l={l}");
            }
        }
    }
}

#[test]
fn optimal_static_rate_exceeds_one_over_n() {
    let cfg = OptimizerConfig::default();
    for n in [5usize, 10, 50, 100, 300] {
        let (p, total) = static_opt_rate(n, RateFamily::Binomial, 0.0, &cfg).unwrap();
        assert!(p > 1.0 / n as f64, "n={n} p={p}");
        let at_one_over_n = PolicyTable::static_rate(n, RateFamily::Binomial, 1.0 / n as f64).unwrap();
        assert!(total <= total_expected_time(&remaining_times(n, &at_one_over_n, None).unwrap()));
    }
}

#[test]
fn conditional_static_optimum_is_flip_one() {
    let cfg = OptimizerConfig::default();
    let n = 100;
    let (p, total) = static_opt_rate(n, RateFamily::ConditionalBinomial, 0.0, &cfg).unwrap();
    assert_eq!(p, 0.0);
    let rls = remaining_times(n, &PolicyTable::static_strength(n, 1).unwrap(), None).unwrap();
    assert!((total - total_expected_time(&rls)).abs() < 1e-9);
}

#[test]
fn drift_rate_at_level_one_of_three() {
    let cfg = OptimizerConfig::default();
    let (t, _) = p_opt_table(3, RateFamily::Binomial, 0.0, &cfg).unwrap();
    assert!((rates(&t)[1] - 2.0 / 3.0).abs() < 1e-6);
}

fn random_strengths(n: usize) -> impl Strategy<Value = Vec<usize>> {
    // flip one bit near the optimum so every random table is solvable
    proptest::collection::vec(1..=n, n).prop_map(move |mut ks| {
        ks[n - 1] = 1;
        ks
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_strengths_beat_random_tables(ks in (2usize..=50).prop_flat_map(random_strengths)) {
        let n = ks.len();
        let policy = PolicyTable { values: PolicyValues::Strengths(ks), ..PolicyTable::static_strength(n, 1).unwrap() };
        if let Ok(rt) = remaining_times(n, &policy, None) {
            let (_, opt) = k_opt_table(n).unwrap();
            prop_assert!(total_expected_time(&opt) <= total_expected_time(&rt) + 1e-9);
        }
    }

    #[test]
    fn optimal_rates_beat_static_rates(n in 2usize..=50, p in 0.001f64..0.999) {
        let cfg = OptimizerConfig::default();
        for family in [RateFamily::Binomial, RateFamily::ConditionalBinomial] {
            let (_, opt) = p_opt_table(n, family, 0.0, &cfg).unwrap();
            // large rates can truncate away every improving strength near the optimum
            if let Ok(fixed) = remaining_times(n, &PolicyTable::static_rate(n, family, p).unwrap(), None) {
                prop_assert!(total_expected_time(&opt) <= total_expected_time(&fixed) + 1e-9);
            }
        }
    }

    #[test]
    fn tables_respect_rate_floor(n in 2usize..=60, which in 0usize..2) {
        let cfg = OptimizerConfig::default();
        let p_min = [0.5, 1.0][which] / n as f64;
        let (t, _) = p_opt_table(n, RateFamily::ConditionalBinomial, p_min, &cfg).unwrap();
        prop_assert!(rates(&t).iter().all(|&p| p >= p_min && p <= 1.0));
        let d = p_drift_table(n, RateFamily::ConditionalBinomial, p_min, &cfg).unwrap();
        prop_assert!(rates(&d).iter().all(|&p| p >= p_min && p <= 1.0));
    }
}
