use exitmass_core::conditions::grey_condition;
use exitmass_core::{BranchingMechanism, LevyMeasure, StableDensity, Atom, sheu_condition};
use proptest::prelude::*;

fn mechanism() -> impl Strategy<Value = BranchingMechanism> {
    (
        -2.0..2.0f64,
        0.0..2.0f64,
        prop::collection::vec((0.05..3.0f64, 0.0..2.0f64), 0..3),
        prop::option::of((0.1..2.0f64, 0.05..0.95f64)),
    )
        .prop_filter_map("valid mechanism", |(alpha, beta, atoms, stable)| {
            let atoms = atoms.into_iter().map(|(location, mass)| Atom { location, mass }).collect();
            let stable = stable.map(|(c, b)| StableDensity::new(c, b).unwrap());
            let levy = LevyMeasure::new(atoms, stable).ok()?;
            // keep ψ(∞) = ∞ with a comfortable margin
            let beta = if stable.is_none() { beta.max(0.1) } else { beta };
            BranchingMechanism::new(alpha, beta, levy).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_is_midpoint_convex(m in mechanism(), a in 0.0..20.0f64, b in 0.0..20.0f64) {
        let mid = m.psi(0.5 * (a + b));
        let chord = 0.5 * (m.psi(a) + m.psi(b));
        prop_assert!(mid <= chord + 1e-9 * (1.0 + chord.abs()));
    }

    #[test]
    fn root_brackets_the_sign_change(m in mechanism(), k in 1e-6..5.0f64) {
        let ls = m.lambda_star();
        prop_assert!(m.eval_psi(ls).unwrap().abs() <= 1e-9);
        prop_assert!(m.psi(ls + 1e-6 + k) > 0.0);
        if ls > 0.0 {
            prop_assert!(m.psi(ls * 0.5) < 0.0);
        }
    }

    #[test]
    fn psi_infinity_sign_and_convexity(m in mechanism(), a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let ls = m.lambda_star();
        prop_assert!(m.psi_infinity(ls).unwrap().abs() <= 1e-9);
        let pa = m.psi_infinity(a).unwrap();
        prop_assert!(pa * (a - ls) >= -1e-12);
        let mid = m.psi_infinity(0.5 * (a + b)).unwrap();
        let chord = 0.5 * (pa + m.psi_infinity(b).unwrap());
        prop_assert!(mid <= chord + 1e-8 * (1.0 + chord.abs()));
    }

    #[test]
    fn psi_infinity_squared_derivative_is_twice_psi(m in mechanism(), t in 0.1..8.0f64) {
        let theta = m.lambda_star() + t;
        let h = 1e-4 * theta;
        let sq = |x: f64| m.psi_infinity(x).unwrap().powi(2);
        let deriv = (sq(theta + h) - sq(theta - h)) / (2.0 * h) / 2.0;
        let want = 2.0 * m.psi(theta);
        prop_assert!((deriv - want).abs() <= 1e-6 * want.abs().max(1e-3), "{} vs {}", deriv, want);
    }
}

#[test]
fn supercritical_psi_infinity_is_negative_below_root() {
    let m = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
    assert!(m.psi_infinity(0.5).unwrap() < 0.0);
    let sub = BranchingMechanism::quadratic(-1.0, 1.0).unwrap();
    assert_eq!(sub.lambda_star(), 0.0);
    assert!(sub.psi_infinity(0.5).unwrap() > 0.0);
}

#[test]
fn grey_of_limit_matches_sheu_on_quadratic() {
    let m = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
    let grey = grey_condition(|t| m.psi_infinity(t).unwrap(), 2.0).unwrap();
    assert!(grey.holds);
    assert_eq!(grey.holds, sheu_condition(&m).unwrap().holds);
}
