use super::*;
use crate::estimates::break_even;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn uniform(low: f64, high: f64) -> Dist {
    Dist::Uniform { low, high }
}

fn point_dist() -> ParameterDistributions {
    ParameterDistributions {
        mu: Dist::point(0.2),
        gamma: Dist::point(1.0),
        r: Dist::point(1.0),
        k: Dist::point(1.0),
        c: Dist::point(1.0),
        x_ext: Dist::point(0.05),
        x_init: Dist::point(0.1),
        d: 1.0,
        s: 1.0,
        rng_seed: 0,
    }
}

/// Slow-resource community on which assembly follows the R* ordering.
fn slow_resource(s: f64) -> ParameterDistributions {
    ParameterDistributions {
        mu: Dist::point(0.2),
        gamma: Dist::point(1.0),
        r: uniform(1.32, 1.44),
        k: Dist::point(1.0),
        c: Dist::point(1e-6),
        x_ext: Dist::point(0.005),
        x_init: uniform(0.0051, 0.05),
        d: 1e-6,
        s,
        rng_seed: 0,
    }
}

fn slow_opts() -> SimOptions {
    SimOptions { horizon: 1e11, ..Default::default() }
}

#[test]
fn point_masses_reproduce_break_even() {
    let s = sample_community(&point_dist(), 7, 3).unwrap();
    let b = break_even(&s.params).unwrap();
    assert_eq!(s.rejections, 0);
    for i in 0..7 {
        assert_relative_eq!(s.beta[i], b.beta[i].unwrap(), max_relative = 1e-15);
        assert_relative_eq!(s.beta[i], 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(s.theta[i], 0.25 * 0.05, max_relative = 1e-15);
    }
}

#[test]
fn same_seed_same_sample() {
    let d = slow_resource(0.2);
    let a = sample_community(&d, 50, 11).unwrap();
    let b = sample_community(&d, 50, 11).unwrap();
    assert_eq!(a, b);
    let c = sample_trial(&d, 50, 11, 1).unwrap();
    assert_ne!(a.beta, c.beta);
    let e = sample_community(&d, 50, 12).unwrap();
    assert_ne!(a.beta, e.beta);
}

#[test]
fn beta_histogram_inside_analytic_range() {
    let d = ParameterDistributions {
        mu: uniform(0.1, 0.3),
        gamma: uniform(0.5, 2.0),
        r: uniform(1.0, 2.0),
        k: uniform(0.5, 1.5),
        c: uniform(0.5, 1.0),
        x_ext: uniform(0.01, 0.05),
        x_init: uniform(0.2, 0.3),
        d: 1.0,
        s: 1.0,
        rng_seed: 0,
    };
    let (lo, hi) = d.beta_range().unwrap();
    // hand evaluation: 0.105 * 0.5 / 1.895 and 0.4 * 1.5 / 0.6
    assert_relative_eq!(lo, 0.0525 / 1.895, max_relative = 1e-14);
    assert_relative_eq!(hi, 1.0, max_relative = 1e-14);
    let s = sample_community(&d, 500, 5).unwrap();
    assert!(s.beta.iter().all(|&b| (lo..=hi).contains(&b)));
}

#[test]
fn excessive_rejection_aborts() {
    let d = ParameterDistributions { r: uniform(0.1, 0.3), ..point_dist() };
    let err = sample_community(&d, 20, 1).unwrap_err();
    assert!(matches!(err, Error::Sampling(_)), "{err}");
    let d = ParameterDistributions { x_init: Dist::point(0.05), ..point_dist() };
    assert!(sample_community(&d, 20, 1).is_err());
}

#[test]
fn some_rejections_are_redrawn() {
    // r below 0.25 is rejected: a quarter of the mass
    let d = ParameterDistributions { r: uniform(0.2, 0.4), ..point_dist() };
    let s = sample_community(&d, 400, 2).unwrap();
    assert!(s.rejections > 50 && s.rejections < 200, "{}", s.rejections);
    assert!(s.params.growth.r.iter().all(|&r| r > 0.25));
}

#[test]
fn distribution_validation() {
    assert!(uniform(0.0, 1.0).validate("r").is_err());
    assert!(uniform(2.0, 1.0).validate("r").is_err());
    assert!(uniform(1.0, f64::INFINITY).validate("r").is_err());
    assert!(Dist::LogNormal { mean: 1.0, sigma: 0.0, low: 2.0, high: 3.0 }.validate("r").is_err());
    assert!(Dist::LogNormal { mean: 1.0, sigma: 0.1, low: 0.5, high: 3.0 }.validate("r").is_ok());
}

#[test]
fn truncated_log_normal_moments() {
    let law = Dist::LogNormal { mean: 2.0, sigma: 0.2, low: 0.1, high: 100.0 };
    let mut rng = trial_rng(1, 0);
    let xs: Vec<f64> = (0..20000).map(|_| law.sample(&mut rng).unwrap()).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    assert!((m - 2.0).abs() < 0.01, "{m}");
    assert!((sd - 0.2).abs() < 0.01, "{sd}");
    let narrow = Dist::LogNormal { mean: 2.0, sigma: 0.5, low: 1.9, high: 2.0 };
    assert!((0..100).all(|_| (1.9..=2.0).contains(&narrow.sample(&mut rng).unwrap())));
    let hopeless = Dist::LogNormal { mean: 1.0, sigma: 0.01, low: 50.0, high: 51.0 };
    assert!(hopeless.sample(&mut rng).is_err());
}

#[test]
fn single_species_survives_iff_beta_below_supply() {
    let dist = |s| ParameterDistributions { d: 1.0, c: Dist::point(1.0), ..slow_resource(s) };
    for (s, alive) in [(0.5, true), (0.15, false)] {
        let sample = sample_community(&dist(s), 1, 4).unwrap();
        let rep = rstar_experiment(&sample, &SimOptions { horizon: 1e6, ..Default::default() }).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.n_e_simulated == 1, alive);
        assert_eq!(sample.beta[0] < s, alive);
        assert!(rep.rank_consistent);
        assert_eq!(rep.mismatch_count, 0);
    }
}

#[test]
fn slow_resource_follows_r_star_ordering() {
    let ens = rstar_ensemble(&slow_resource(0.216), 150, 4, 9, &slow_opts()).unwrap();
    assert_eq!(ens.summary.converged, 4);
    for t in &ens.trials {
        assert!(t.rank_consistent, "{t:?}");
        assert!(t.n_e_simulated > 0 && t.n_e_simulated < 150);
        assert!(t.upper_bound_rough.admits(t.n_e_simulated));
        assert!(t.beta_gap.unwrap() >= 0.0);
    }
    assert_eq!(ens.summary.rank_consistent_fraction, Some(1.0));
}

#[test]
fn ensemble_is_independent_of_pool_width() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rstar_ensemble(&slow_resource(0.216), 60, 6, 21, &slow_opts()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn zero_trials_rejected() {
    assert!(rstar_ensemble(&point_dist(), 5, 0, 1, &SimOptions::default()).is_err());
    assert!(beta_gap_statistic(&point_dist(), 5, 3, 0, 1).is_err());
    assert!(Frequency::new(0, 0).is_err());
}

#[test]
fn point_mass_gap_frequency_is_one() {
    let f = beta_gap_statistic(&point_dist(), 100, 3, 20, 1).unwrap();
    assert_eq!(f.frequency, 1.0);
    assert_eq!(f.successes, 20);
    assert!(f.wilson_low > 0.8 && f.wilson_high == 1.0);
}

#[test]
fn gap_frequency_grows_with_m() {
    let d = ParameterDistributions { r: uniform(1.0, 3.0), k: Dist::point(20.0), ..point_dist() };
    let f: Vec<f64> = [10, 100, 1000]
        .iter()
        .map(|&m| beta_gap_statistic(&d, m, 3, 200, 8).unwrap().frequency)
        .collect();
    assert!(f[0] < f[1] && f[1] <= f[2], "{f:?}");
}

#[test]
fn wilson_interval_reference() {
    // 8 of 10 at 95%
    let f = Frequency::new(8, 10).unwrap();
    assert_relative_eq!(f.wilson_low, 0.4901625, epsilon = 1e-6);
    assert_relative_eq!(f.wilson_high, 0.9433178, epsilon = 1e-6);
    let f = Frequency::new(0, 10).unwrap();
    assert_eq!(f.wilson_low, 0.0);
}

#[test]
fn stress_parameter_substitution() {
    assert_relative_eq!(stress_parameter(1.0, 1.0, 1.0, 10.0, 1.0), 0.1, max_relative = 1e-15);
}

#[test]
fn localized_community_falls_off_a_cliff() {
    let dist = ParameterDistributions {
        r: uniform(1.379, 1.381),
        c: Dist::point(1e-7),
        ..slow_resource(0.3)
    };
    let sample = sample_community(&dist, 40, 2).unwrap();
    let grid: Vec<f64> = (0..8).map(|j| 0.19 - 0.005 * j as f64).collect();
    let (rep, curve) = robustness_sweep(&sample, &grid, &slow_opts()).unwrap();
    assert_eq!(curve.len(), 8);
    assert_eq!(curve[0].n_e, 40);
    assert!(curve.last().unwrap().mass_extinct);
    assert!(!rep.non_monotone && rep.all_converged);
    let (s_crit, s_pred) = (rep.s_critical.unwrap(), rep.s_predicted.unwrap());
    assert!((s_crit - s_pred).abs() < 0.01 * s_pred, "{s_crit} vs {s_pred}");
    assert!(rep.bisection_steps > 0);
    assert!(rep.p_stress > 0.0 && rep.delta_s < 0.0);
}

#[test]
fn sweep_grid_validation() {
    let sample = sample_community(&point_dist(), 3, 1).unwrap();
    let o = SimOptions::default();
    assert!(robustness_sweep(&sample, &[1.0], &o).is_err());
    assert!(robustness_sweep(&sample, &[1.0, 1.0], &o).is_err());
    assert!(robustness_sweep(&sample, &[0.5, 1.0], &o).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_invariants(seed in any::<u64>(), m in 1usize..60, rlo in 0.3f64..1.0, w in 0.0f64..2.0) {
        let d = ParameterDistributions { r: uniform(rlo, rlo + w), ..point_dist() };
        let s = sample_community(&d, m, seed).unwrap();
        prop_assert_eq!(s.beta.len(), m);
        prop_assert!(s.beta.iter().all(|b| b.is_finite() && *b > 0.0));
        let mut idx = s.beta_sorted_index.clone();
        prop_assert!(idx.windows(2).all(|p| s.beta[p[0]] <= s.beta[p[1]]));
        idx.sort();
        prop_assert_eq!(idx, (0..m).collect::<Vec<_>>());
        prop_assert!((0..m).all(|i| s.x_init[i] > s.params.threshold(i)));
    }
}
