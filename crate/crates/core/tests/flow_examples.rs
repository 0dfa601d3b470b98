use exitmass_core::flow::{
    build_curve, convergence_report, default_flow_grid, extract_psi, monotonicity_report, solve_u_infinity,
    DEFAULT_RADII,
};
use exitmass_core::solver::SolverOptions;
use exitmass_core::BranchingMechanism;

fn thetas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0]
}

#[test]
fn large_radius_psi_near_limit() {
    let m = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
    let v = extract_psi(&m, 2, 50.0, 2.0, &default_flow_grid(), &SolverOptions::default()).unwrap();
    let limit = 2.0 * (5.0f64 / 6.0).sqrt();
    assert!((m.psi_infinity(2.0).unwrap() - limit).abs() < 1e-12);
    assert!((v - limit).abs() < 0.05, "{v}");
}

#[test]
fn quadratic_curve_converges_monotonically() {
    let m = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
    let curve = build_curve(&m, 2, &DEFAULT_RADII, &thetas(), &default_flow_grid(), &SolverOptions::default()).unwrap();
    let rep = convergence_report(&curve);
    assert!(rep.e_of_r.windows(2).all(|w| w[1] < w[0]), "{:?}", rep.e_of_r);
    assert!(rep.final_error <= 0.05);
    assert!(monotonicity_report(&curve, m.lambda_star()).pass);
    assert!(curve.convexity_violation() <= 1e-8);
    assert!(curve.sign_violation() <= 1e-8);
    assert_eq!(curve.root_defect(), Some(0.0));
}

#[test]
fn subcritical_curve_is_non_negative_and_increasing() {
    let m = BranchingMechanism::quadratic(-1.0, 1.0).unwrap();
    let curve = build_curve(&m, 3, &DEFAULT_RADII, &thetas(), &default_flow_grid(), &SolverOptions::default()).unwrap();
    assert!(curve.psi_values.iter().flatten().all(|v| v.unwrap() >= -1e-8));
    let rep = monotonicity_report(&curve, 0.0);
    assert!(rep.pass, "{:?}", rep.worst_violation);
}

#[test]
fn linear_mechanism_converges_to_closed_form() {
    let m = BranchingMechanism::quadratic(-1.0, 0.0).unwrap();
    let curve = build_curve(&m, 1, &DEFAULT_RADII, &thetas(), &default_flow_grid(), &SolverOptions::default()).unwrap();
    for (j, t) in thetas().iter().enumerate() {
        assert!((curve.psi_inf_values[j] - 2f64.sqrt() * t).abs() < 1e-12);
    }
    assert!(convergence_report(&curve).final_error <= 0.05);
}

#[test]
fn single_radius_monotonicity_is_vacuous() {
    let m = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
    let curve = build_curve(&m, 2, &[3.0], &thetas(), &default_flow_grid(), &SolverOptions::default()).unwrap();
    assert!(monotonicity_report(&curve, 1.0).pass);
}

#[test]
fn limiting_semigroup_property() {
    for m in [BranchingMechanism::quadratic(1.0, 1.0).unwrap(), BranchingMechanism::quadratic(0.0, 1.0).unwrap()] {
        for theta in [0.2, 1.0, 2.5] {
            let whole = solve_u_infinity(&m, 1.7, theta).unwrap();
            let split = solve_u_infinity(&m, 1.0, solve_u_infinity(&m, 0.7, theta).unwrap()).unwrap();
            assert!((whole - split).abs() <= 1e-8, "{whole} vs {split}");
        }
    }
}

#[test]
fn curve_is_independent_of_thread_count() {
    let m = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            build_curve(&m, 2, &[1.0, 2.0, 5.0], &thetas(), &default_flow_grid(), &SolverOptions::default()).unwrap()
        })
    };
    assert_eq!(run(1), run(3));
}
