use exitmass_core::sim::bbm::branching_property_check;
use exitmass_core::sim::csbp::simulate_csbp_observed;
use exitmass_core::sim::{
    extinction_vs_extinguishing, laplace_estimate, martingale_check, simulate_bbm_exit, simulate_csbp, BbmSpec,
    CsbpSpec,
};
use exitmass_core::LevyMeasure;

#[test]
fn explosive_mechanism_bookkeeping() {
    let spec = CsbpSpec::new(0.5, 0.0, 1.0, LevyMeasure::zero()).with_horizon(3.0, 1e-2);
    let rep = extinction_vs_extinguishing(&spec, 20_000, 5, &[1.0, 3.0]).unwrap();
    assert!(rep.grey.holds);
    assert!(rep.bookkeeping_ok);
    for h in &rep.horizons {
        assert!(h.exploded_frac > 0.0);
        assert!((h.extinct.mean + h.exploded_frac + h.surviving_frac - 1.0).abs() < 1e-12);
    }
    // F = −1/2 + θ², extinguishing probability e^{−1/√2}
    assert!((rep.limit_extinct - (-(0.5f64).sqrt()).exp()).abs() < 1e-12);
}

#[test]
fn linear_mechanism_never_hits_zero() {
    let spec = CsbpSpec::linear(1.0).with_horizon(5.0, 1e-2);
    let rep = extinction_vs_extinguishing(&spec, 500, 1, &[1.0, 3.0, 5.0]).unwrap();
    assert!(!rep.grey.holds && !rep.absorption && rep.pass);
    let medians: Vec<f64> = rep.horizons.iter().map(|h| h.median_alive.unwrap()).collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    assert!((medians[2] - (-5.0f64).exp()).abs() < 1e-12);
}

#[test]
fn feller_laplace_matches_closed_form_and_is_stable_in_dt() {
    // F = θ²: u(t, θ) = θ / (1 + θt)
    let theta: f64 = 1.0;
    let want = (-(theta / (1.0 + theta))).exp();
    let coarse = laplace_estimate(&simulate_csbp(&CsbpSpec::feller(1.0).with_horizon(1.0, 4e-3), 40_000, 3).unwrap(), theta)
        .unwrap();
    let fine = laplace_estimate(&simulate_csbp(&CsbpSpec::feller(1.0).with_horizon(1.0, 2e-3), 40_000, 3).unwrap(), theta)
        .unwrap();
    assert!(fine.agrees_with(want, 3.0), "{fine:?} vs {want}");
    assert!((coarse.mean - fine.mean).abs() < 2.0 * fine.std_error.max(coarse.std_error));
}

#[test]
fn jump_mechanism_laplace_matches_ode() {
    // F(θ) = θ + (e^{−θ} − 1 + θ) from a unit atom at x = 1
    let spec = CsbpSpec::new(0.0, 1.0, 0.0, LevyMeasure::atom(1.0, 1.0).unwrap()).with_horizon(1.0, 1e-3);
    let f = |u: f64| u + (-u).exp() - 1.0 + u;
    // reference u(1, 1) by RK4 on du/dt = −F(u)
    let mut u = 1.0;
    let h = 1e-4;
    for _ in 0..10_000 {
        let k1 = -f(u);
        let k2 = -f(u + 0.5 * h * k1);
        let k3 = -f(u + 0.5 * h * k2);
        let k4 = -f(u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let est = laplace_estimate(&simulate_csbp(&spec, 40_000, 8).unwrap(), 1.0).unwrap();
    assert!(est.agrees_with((-u).exp(), 3.0), "{est:?} vs {}", (-u).exp());
}

#[test]
fn observation_grid_is_consistent_with_horizon_runs() {
    let spec = CsbpSpec::feller(1.0).with_horizon(2.0, 1e-2);
    let multi = simulate_csbp_observed(&spec, 100, 4, &[1.0, 2.0]).unwrap();
    let single = simulate_csbp(&spec, 100, 4).unwrap();
    // same per-path streams and step sizes: terminal values coincide
    for (a, b) in multi.paths.iter().zip(&single.paths) {
        assert_eq!(a.terminal(), b.terminal());
    }
}

#[test]
fn bbm_martingale_for_supercritical_offspring() {
    for d in 1..=3 {
        let mut spec = BbmSpec::new(d, 1.0, 0.7, vec![1.0, 2.0, 3.0]);
        spec.cap = 1000;
        let samples = simulate_bbm_exit(&spec, 4000, 40 + d as u64).unwrap();
        let rep = martingale_check(&samples, 3.0 / 7.0).unwrap();
        assert!(rep.pass, "d={d}: {rep:?}");
    }
}

#[test]
fn bbm_degenerate_exit_counts_appear() {
    let mut spec = BbmSpec::new(1, 1.0, 0.7, vec![1.0, 3.0]);
    spec.cap = 500;
    let samples = simulate_bbm_exit(&spec, 2000, 2).unwrap();
    assert_eq!(samples.cap_fraction(0), 0.0);
    assert!(samples.cap_fraction(1) > 0.0);
}

#[test]
fn bbm_critical_trivial_martingale() {
    let spec = BbmSpec::new(2, 1.0, 0.5, vec![1.0, 2.0]);
    let samples = simulate_bbm_exit(&spec, 500, 1).unwrap();
    let rep = martingale_check(&samples, spec.extinction_probability()).unwrap();
    assert!(rep.pass && rep.means.iter().all(|m| m.mean == 1.0));
}

#[test]
fn bbm_branching_property() {
    let spec = BbmSpec::new(2, 1.0, 0.5, vec![1.0, 2.0]);
    for rep in branching_property_check(&spec, 4000, 17).unwrap() {
        assert!(rep.pass, "{rep:?}");
    }
}

#[test]
fn bbm_is_thread_count_independent() {
    let spec = BbmSpec::new(2, 1.0, 0.7, vec![1.0, 2.0]);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_bbm_exit(&spec, 300, 9).unwrap())
    };
    assert_eq!(run(1), run(4));
}
