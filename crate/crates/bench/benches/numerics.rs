use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use exitmass_core::sim::{simulate_bbm_exit, simulate_csbp, BbmSpec, CsbpSpec};
use exitmass_core::{build_curve, solve_u_infinity, solve_u_on, BranchingMechanism, GridSpec, SolverOptions};

fn quadratic() -> BranchingMechanism {
    BranchingMechanism::quadratic(1.0, 1.0).expect("valid mechanism")
}

fn radial_solver(c: &mut Criterion) {
    let mech = quadratic();
    let mut group = c.benchmark_group("solve_u");
    for nodes in [128usize, 512, 2048] {
        let spec = GridSpec::uniform(nodes);
        for (name, opts) in [("newton", SolverOptions::default()), ("picard", SolverOptions::picard())] {
            group.bench_with_input(BenchmarkId::new(name, nodes), &spec, |b, spec| {
                b.iter(|| solve_u_on(&mech, 2, black_box(2.0), black_box(3.0), spec, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn limit_profile(c: &mut Criterion) {
    let mech = quadratic();
    c.bench_function("psi_infinity", |b| b.iter(|| mech.psi_infinity(black_box(2.5)).unwrap()));
    c.bench_function("solve_u_infinity", |b| b.iter(|| solve_u_infinity(&mech, black_box(5.0), black_box(3.0)).unwrap()));
}

fn mechanism_curve(c: &mut Criterion) {
    let mech = quadratic();
    let radii = [1.0, 5.0, 20.0];
    let thetas: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
    let spec = GridSpec::resolving(0.01);
    let opts = SolverOptions::default();
    let mut group = c.benchmark_group("build_curve");
    group.sample_size(10);
    group.bench_function("quadratic_d2_3x13", |b| {
        b.iter(|| build_curve(&mech, 2, &radii, &thetas, &spec, &opts).unwrap())
    });
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulation");
    group.sample_size(10);
    let feller = CsbpSpec::feller(1.0).with_horizon(1.0, 1e-2);
    group.bench_function("csbp_feller_1000_paths", |b| b.iter(|| simulate_csbp(&feller, 1000, black_box(7)).unwrap()));
    let mut bbm = BbmSpec::new(2, 1.0, 0.7, vec![1.0, 2.0]);
    bbm.cap = 1000;
    group.bench_function("bbm_exit_200_runs", |b| b.iter(|| simulate_bbm_exit(&bbm, 200, black_box(7)).unwrap()));
    group.finish();
}

criterion_group!(benches, radial_solver, limit_profile, mechanism_curve, simulation);
criterion_main!(benches);
