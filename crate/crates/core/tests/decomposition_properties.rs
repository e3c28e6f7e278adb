mod common;

use common::{mean_se, piecewise};
use proptest::prelude::*;
use renewkit::decomposition::{
    check_identity, decompose_functional, martingale, moving_average_truncated_mean, optional_qv, predictable_qv,
    quadratic_error_bound, tol_path, truncated_decomposition, truncated_lambda, wald_residual, CountFunctional,
    RenewalFunctional, SquaredMartingaleFunctional,
};
use renewkit::processes::simulate_path;
use renewkit::{Delay, DecompositionReport, LifetimeDistribution, MonteCarlo, ProcessSpec, SpecOracle};

fn exp1() -> LifetimeDistribution {
    LifetimeDistribution::exponential(1.0).unwrap()
}

fn gamma22() -> LifetimeDistribution {
    LifetimeDistribution::gamma(2.0, 2.0).unwrap()
}

fn alternating() -> ProcessSpec {
    serde_json::from_str(
        r#"{"kind":"modulated","states":["fast","slow"],"initial":"fast","kernel":[[0,1],[1,0]],
            "lifetimes":{"fast":{"kind":"exponential","rate":1},"slow":{"kind":"exponential","rate":0.3333333333333333}}}"#,
    )
    .unwrap()
}

/// One spec per kind with its long-run rate.
fn kinds() -> Vec<(ProcessSpec, f64)> {
    vec![
        (ProcessSpec::plain(gamma22()), 1.0),
        (ProcessSpec::Delayed { delay: Delay::Equilibrium, lifetime: LifetimeDistribution::uniform(0.0, 2.0).unwrap() }, 1.0),
        (ProcessSpec::Delayed { delay: Delay::Distribution(gamma22()), lifetime: LifetimeDistribution::pareto_shifted(2.5).unwrap() }, 1.0 / 0.6666666666666666),
        (alternating(), 0.5),
        (ProcessSpec::StationaryMa { m: 3, base: exp1() }, 1.0),
        (ProcessSpec::plain(LifetimeDistribution::lattice(1.0, vec![0.5, 0.5]).unwrap()), 1.0 / 1.5),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pathwise_identities_hold_for_every_kind(seed in any::<u64>(), frac in 0.0f64..=1.0, vi in 0usize..4) {
        let v = [0.1, 1.0, 10.0, f64::INFINITY][vi];
        for (spec, lambda) in kinds() {
            let p = simulate_path(&spec, 40.0, seed).unwrap();
            let t = 40.0 * frac;
            let n = p.count(t).unwrap();
            prop_assert!(check_identity(&p, lambda, t).unwrap().abs() <= tol_path(n));
            let oracle = SpecOracle::new(&spec).unwrap();
            let d = truncated_decomposition(&p, &oracle, v, t).unwrap();
            prop_assert!(d.residual.abs() <= tol_path(n), "{:?} v={}", d, v);
            prop_assert_eq!(d.count, n);
        }
    }

    #[test]
    fn truncated_rate_is_at_least_one_over_v(seed in any::<u64>(), frac in 0.0f64..=1.0, v in 0.01f64..20.0) {
        for (spec, _) in kinds() {
            let p = simulate_path(&spec, 20.0, seed).unwrap();
            let oracle = SpecOracle::new(&spec).unwrap();
            let rate = truncated_lambda(&p, &oracle, v, 20.0 * frac).unwrap();
            prop_assert!(rate >= (1.0 - 1e-12) / v, "{} < 1/{}", rate, v);
        }
    }

    #[test]
    fn wald_residual_vanishes_pathwise(seed in any::<u64>(), frac in 0.0f64..=1.0) {
        let (spec, lambda) = &kinds()[0];
        let p = simulate_path(spec, 30.0, seed).unwrap();
        let t = 30.0 * frac;
        let n = p.count(t).unwrap();
        prop_assert!(wald_residual(&p, 1.0 / lambda, t).unwrap().abs() <= tol_path(n) * 30.0);
    }

    #[test]
    fn moving_average_oracle_matches_quadrature(s in 0.0f64..6.0, v in 0.05f64..8.0, m in 2usize..5) {
        for base in [exp1(), gamma22(), LifetimeDistribution::uniform(0.5, 1.5).unwrap()] {
            let mf = m as f64;
            let tail = |y: f64| { let x = mf * y - s; if x < 0.0 { 1.0 } else { base.tail(x) } };
            let oracle = piecewise(&tail, 0.0, v, &[s / mf, (s + 0.5) / mf, (s + 1.5) / mf], 1e-12);
            let got = moving_average_truncated_mean(&base, m, s, v);
            prop_assert!((got - oracle).abs() <= 1e-8 * (1.0 + v), "{} vs {}", got, oracle);
        }
    }
}

#[test]
fn infinite_truncation_recovers_plain_decomposition() {
    let spec = ProcessSpec::plain(gamma22());
    let oracle = SpecOracle::new(&spec).unwrap();
    for seed in 0..20 {
        let p = simulate_path(&spec, 30.0, seed).unwrap();
        for t in [0.0, 3.3, 17.0, 30.0] {
            let d = truncated_decomposition(&p, &oracle, f64::INFINITY, t).unwrap();
            let m = martingale(&p, 1.0, t).unwrap();
            assert!((d.martingale - m).abs() <= tol_path(d.count));
            assert!((d.drift_integral - t).abs() <= tol_path(d.count));
            assert!((d.boundary - p.residual(t).unwrap()).abs() <= 1e-12);
            assert_eq!(truncated_lambda(&p, &oracle, f64::INFINITY, t).unwrap(), 1.0);
        }
    }
}

#[test]
fn modulated_truncated_rate_follows_state() {
    let spec = alternating();
    let oracle = SpecOracle::new(&spec).unwrap();
    let p = simulate_path(&spec, 200.0, 8).unwrap();
    let states = p.states().unwrap();
    for i in 0..2000 {
        let t = 200.0 * i as f64 / 1999.0;
        let n = p.count(t).unwrap();
        let rate = truncated_lambda(&p, &oracle, 1e6, t).unwrap();
        let expected = if states[n - 1] == 0 { 1.0 } else { 1.0 / 3.0 };
        assert!((rate - expected).abs() < 1e-9, "t={t}: {rate}");
    }
}

#[test]
fn truncated_martingale_has_zero_mean() {
    let mc = MonteCarlo::new(20_000, 31);
    for (spec, _) in kinds() {
        let oracle = SpecOracle::new(&spec).unwrap();
        for v in [0.5, 2.0] {
            let xs = mc
                .replicate_paths(&spec, 10.0, |p| Ok(truncated_decomposition(p, &oracle, v, 10.0).unwrap().martingale))
                .unwrap();
            let (m, se) = mean_se(&xs);
            assert!(m.abs() <= 4.0 * se, "{spec:?} v={v}: {m} ± {se}");
        }
    }
}

#[test]
fn renewal_martingale_has_zero_mean_and_orthogonal_increments() {
    let mc = MonteCarlo::new(40_000, 32);
    for (spec, lambda) in kinds().into_iter().take(3) {
        let xs = mc
            .replicate_paths(&spec, 10.0, |p| {
                let m5 = martingale(p, lambda, 5.0).unwrap();
                let m10 = martingale(p, lambda, 10.0).unwrap();
                Ok([m10, (m10 - m5) * m5])
            })
            .unwrap();
        for k in 0..2 {
            let col: Vec<f64> = xs.iter().map(|x| x[k]).collect();
            let (m, se) = mean_se(&col);
            assert!(m.abs() <= 4.0 * se, "{spec:?} column {k}: {m} ± {se}");
        }
    }
}

#[test]
fn quadratic_variations_agree_in_mean() {
    let spec = ProcessSpec::plain(gamma22());
    let sigma2 = gamma22().variance();
    let mc = MonteCarlo::new(40_000, 33);
    let xs = mc
        .replicate_paths(&spec, 10.0, |p| {
            let m = martingale(p, 1.0, 10.0).unwrap();
            Ok([
                optional_qv(p, 1.0, 10.0).unwrap() - m * m,
                predictable_qv(p, 1.0, sigma2, 10.0).unwrap() - m * m,
            ])
        })
        .unwrap();
    for k in 0..2 {
        let col: Vec<f64> = xs.iter().map(|x| x[k]).collect();
        let (m, se) = mean_se(&col);
        assert!(m.abs() <= 4.0 * se, "column {k}: {m} ± {se}");
    }
}

#[test]
fn wald_identity_in_mean() {
    let spec = ProcessSpec::plain(exp1());
    let mc = MonteCarlo::new(40_000, 34);
    let xs = mc
        .replicate_paths(&spec, 20.0, |p| {
            let n = p.count(20.0).unwrap();
            Ok(p.partial_sum(n) - n as f64)
        })
        .unwrap();
    let (m, se) = mean_se(&xs);
    assert!(m.abs() <= 4.0 * se, "{m} ± {se}");
}

#[test]
fn error_bound_dominates_simulated_second_moment() {
    let d = gamma22();
    let bound = quadratic_error_bound(&d, 10.0).unwrap();
    let mc = MonteCarlo::new(40_000, 35);
    let xs = mc
        .replicate_paths(&ProcessSpec::plain(d.clone()), 10.0, |p| Ok(martingale(p, 1.0, 10.0).unwrap().powi(2)))
        .unwrap();
    let (m, se) = mean_se(&xs);
    assert!(m <= bound + 4.0 * se, "{m} ± {se} vs bound {bound}");
    // E[M^2] = λ^2 σ^2 E[N] and E[N(t)] = 1 + λ t + O(1) for this law.
    assert!(m >= 0.5 * (1.0 + 10.0) - 4.0 * se);
}

#[test]
fn functional_decompositions_on_random_paths() {
    let plain = ProcessSpec::plain(gamma22());
    let delayed = ProcessSpec::Delayed { delay: Delay::Equilibrium, lifetime: gamma22() };
    let sigma2 = gamma22().variance().finite().unwrap();
    for spec in [&plain, &delayed] {
        for seed in 0..40 {
            let p = simulate_path(spec, 25.0, seed).unwrap();
            for t in [0.0, 1.7, 12.5, 25.0] {
                let n = p.count(t).unwrap();

                let c = decompose_functional(&p, &CountFunctional, CountFunctional::conditional_mean, t).unwrap();
                assert_eq!(c.d, n as f64);
                assert_eq!(c.m, 0.0);

                let y = RenewalFunctional { lambda: 1.0 };
                let r = decompose_functional(&p, &y, |p, k| y.conditional_mean(p, k, 1.0), t).unwrap();
                let m = martingale(&p, 1.0, t).unwrap();
                assert!((r.m - m).abs() <= tol_path(n), "{} vs {}", r.m, m);
                assert!((r.value - (n as f64 - p.residual(t).unwrap())).abs() <= 1e-12 * (1.0 + n as f64));

                if !p.is_delayed() {
                    let q = SquaredMartingaleFunctional { lambda: 1.0 };
                    let s = decompose_functional(&p, &q, |p, k| q.conditional_mean(p, k, sigma2), t).unwrap();
                    assert!((s.value - m * m).abs() <= 1e-9 * (1.0 + m * m));
                    assert!((s.d - sigma2 * n as f64).abs() <= tol_path(n) * (1.0 + sigma2 * n as f64));
                }
            }
        }
    }
}

#[test]
fn report_csv_has_header_and_one_row_per_time() {
    let d = gamma22();
    let p = simulate_path(&ProcessSpec::plain(d.clone()), 10.0, 1).unwrap();
    let reports: Vec<_> =
        [1.0, 5.0, 10.0].iter().map(|&t| DecompositionReport::compute(&p, d.mean(), d.variance(), t).unwrap()).collect();
    assert!(reports.iter().all(DecompositionReport::within_tolerance));
    let mut buf = Vec::new();
    DecompositionReport::write_csv(&reports, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], DecompositionReport::CSV_HEADER);
    assert_eq!(lines.len(), 4);
    let cols = DecompositionReport::CSV_HEADER.split(',').count();
    assert!(lines[1..].iter().all(|l| l.split(',').count() == cols));
}
