//! Fixed point of the radial exit equation
//!
//! ```text
//! u(r) = θ − 2 ∫_r^s v^(1−d) ∫_0^v ψ(u(z)) z^(d−1) dz dv
//! ```
//!
//! discretised with cumulative trapezoid sums on a [`RadialGrid`]. The first
//! cell of the inner integral uses the exact moment `∫_0^{r0} z^(d−1) dz =
//! r0^d / d` with ψ frozen at the first node.

use serde::{Deserialize, Serialize};

use super::banded::BandMatrix;
use super::grid::{GridSpec, RadialGrid};
use crate::error::{domain, Error, Result};
use crate::mechanism::BranchingMechanism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Newton–Kantorovich iteration on the discrete fixed-point equation.
    Newton,
    /// Damped successive substitution.
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
    /// Initial damping factor for the Picard method.
    pub omega: f64,
    pub theta_max: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            method: SolverMethod::Newton,
            omega: 1.0,
            theta_max: 1e3,
        }
    }
}

impl SolverOptions {
    pub fn picard() -> Self {
        Self { method: SolverMethod::Picard, ..Self::default() }
    }
}

/// `u(·, s, θ)` on a radial grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceGrid {
    grid: RadialGrid,
    theta: f64,
    dim: u32,
    values: Vec<f64>,
    /// `∫_0^{r_i} ψ(u(z)) z^(d−1) dz` at each node.
    #[serde(skip)]
    inner: Vec<f64>,
    iterations: usize,
    residual: f64,
}

impl LaplaceGrid {
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.grid.s()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `∂u/∂r` at every node.
    pub fn derivatives(&self) -> Vec<f64> {
        let d = self.dim as i32;
        self.grid
            .nodes()
            .iter()
            .zip(&self.inner)
            .map(|(&r, &i)| 2.0 * r.powi(1 - d) * i)
            .collect()
    }

    /// `u(r)` by cubic Hermite interpolation using the exact nodal derivatives.
    pub fn value_at(&self, r: f64) -> Result<f64> {
        let Some(i) = self.grid.locate(r) else {
            return domain(format!(
                "r = {r} outside grid [{}, {}]",
                self.grid.nodes()[0],
                self.grid.s()
            ));
        };
        let nodes = self.grid.nodes();
        let (r0, r1) = (nodes[i], nodes[i + 1]);
        let h = r1 - r0;
        let t = (r - r0) / h;
        let d = self.dim as i32;
        let m0 = 2.0 * r0.powi(1 - d) * self.inner[i];
        let m1 = 2.0 * r1.powi(1 - d) * self.inner[i + 1];
        let t2 = t * t;
        let t3 = t2 * t;
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * self.values[i]
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * self.values[i + 1]
            + (t3 - t2) * h * m1)
    }
}

/// Precomputed per-node weights shared by the Picard map and the Newton system.
struct Discretisation<'a> {
    mech: &'a BranchingMechanism,
    nodes: &'a [f64],
    theta: f64,
    /// r^(d−1)
    w: Vec<f64>,
    /// r^(1−d)
    iw: Vec<f64>,
    first_moment: f64,
}

impl<'a> Discretisation<'a> {
    fn new(mech: &'a BranchingMechanism, nodes: &'a [f64], dim: u32, theta: f64) -> Self {
        let d = dim as i32;
        let w: Vec<f64> = nodes.iter().map(|r| r.powi(d - 1)).collect();
        let iw = nodes.iter().map(|r| r.powi(1 - d)).collect();
        let first_moment = nodes[0].powi(d) / d as f64;
        Self { mech, nodes, theta, w, iw, first_moment }
    }

    fn inner_integrals(&self, u: &[f64], inner: &mut [f64]) {
        let mut prev = self.mech.psi(u[0]) * self.w[0];
        inner[0] = self.mech.psi(u[0]) * self.first_moment;
        for i in 0..u.len() - 1 {
            let h = self.nodes[i + 1] - self.nodes[i];
            let next = self.mech.psi(u[i + 1]) * self.w[i + 1];
            inner[i + 1] = inner[i] + 0.5 * h * (prev + next);
            prev = next;
        }
    }

    /// `out = T(u)` given the inner integrals of `u`.
    fn outer(&self, inner: &[f64], out: &mut [f64]) {
        let n = inner.len();
        out[n - 1] = self.theta;
        let mut acc = 0.0;
        for i in (0..n - 1).rev() {
            let h = self.nodes[i + 1] - self.nodes[i];
            acc += 0.5 * h * (self.iw[i] * inner[i] + self.iw[i + 1] * inner[i + 1]);
            out[i] = self.theta - 2.0 * acc;
        }
    }

    /// sup |u − T(u)|; leaves the inner integrals of `u` in `inner`.
    fn defect(&self, u: &[f64], inner: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.inner_integrals(u, inner);
        self.outer(inner, scratch);
        u.iter().zip(scratch.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Newton correction for `u` (with the inner integrals eliminated after the step).
    fn newton_direction(&self, u: &[f64], inner: &[f64]) -> Result<Vec<f64>> {
        let n = u.len();
        let size = 2 * n;
        let mut jac = BandMatrix::zeros(size, 2, 2);
        let mut rhs = vec![0.0; size];
        let col_u = |i: usize| 2 * i;
        let col_i = |i: usize| 2 * i + 1;

        jac.set(0, col_u(0), -self.mech.psi_prime(u[0]) * self.first_moment);
        jac.set(0, col_i(0), 1.0);
        rhs[0] = -(inner[0] - self.mech.psi(u[0]) * self.first_moment);
        for i in 0..n - 1 {
            let h = self.nodes[i + 1] - self.nodes[i];
            let a = 2 * i + 1;
            jac.set(a, col_u(i), -1.0);
            jac.set(a, col_i(i), -h * self.iw[i]);
            jac.set(a, col_u(i + 1), 1.0);
            jac.set(a, col_i(i + 1), -h * self.iw[i + 1]);
            rhs[a] = -(u[i + 1] - u[i] - h * (self.iw[i] * inner[i] + self.iw[i + 1] * inner[i + 1]));

            let b = 2 * i + 2;
            jac.set(b, col_u(i), -0.5 * h * self.mech.psi_prime(u[i]) * self.w[i]);
            jac.set(b, col_i(i), -1.0);
            jac.set(b, col_u(i + 1), -0.5 * h * self.mech.psi_prime(u[i + 1]) * self.w[i + 1]);
            jac.set(b, col_i(i + 1), 1.0);
            rhs[b] = -(inner[i + 1]
                - inner[i]
                - 0.5 * h * (self.mech.psi(u[i]) * self.w[i] + self.mech.psi(u[i + 1]) * self.w[i + 1]));
        }
        jac.set(size - 1, col_u(n - 1), 1.0);
        rhs[size - 1] = -(u[n - 1] - self.theta);
        jac.solve_in_place(&mut rhs)?;
        Ok((0..n).map(|i| rhs[col_u(i)]).collect())
    }
}

/// Solves for `u(·, s, θ)` on `grid` (whose outer radius must equal `s`).
pub fn solve_u(
    mech: &BranchingMechanism,
    dim: u32,
    s: f64,
    theta: f64,
    grid: &RadialGrid,
    opts: &SolverOptions,
) -> Result<LaplaceGrid> {
    if dim == 0 {
        return domain("dimension must be >= 1");
    }
    if grid.s() != s {
        return domain(format!("grid outer radius {} does not match s = {s}", grid.s()));
    }
    if !(theta.is_finite() && theta >= 0.0) {
        return domain(format!("theta must be finite and >= 0, got {theta}"));
    }
    if theta > opts.theta_max {
        return domain(format!("theta = {theta} exceeds the configured cap {}", opts.theta_max));
    }
    if !(opts.tol > 0.0) {
        return domain("solver tolerance must be positive");
    }
    let disc = Discretisation::new(mech, grid.nodes(), dim, theta);
    let lambda_star = mech.lambda_star();
    let lo = theta.min(lambda_star) - 0.1;
    let hi = theta.max(lambda_star) + 0.1;
    let (values, iterations) = match opts.method {
        SolverMethod::Picard => picard(&disc, lo, hi, opts)?,
        SolverMethod::Newton => newton(&disc, lo, hi, opts)?,
    };
    let n = values.len();
    let mut inner = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let residual = disc.defect(&values, &mut inner, &mut scratch);
    Ok(LaplaceGrid { grid: grid.clone(), theta, dim, values, inner, iterations, residual })
}

/// Builds the grid from `spec` and solves.
pub fn solve_u_on(
    mech: &BranchingMechanism,
    dim: u32,
    s: f64,
    theta: f64,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<LaplaceGrid> {
    let grid = RadialGrid::new(s, spec)?;
    solve_u(mech, dim, s, theta, &grid, opts)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn picard(disc: &Discretisation, lo: f64, hi: f64, opts: &SolverOptions) -> Result<(Vec<f64>, usize)> {
    let n = disc.nodes.len();
    let mut omega = opts.omega;
    let mut inner = vec![0.0; n];
    let mut mapped = vec![0.0; n];
    let mut iterations = 0;
    'restart: loop {
        let mut u = vec![disc.theta; n];
        let mut best_update = f64::INFINITY;
        let mut update = f64::INFINITY;
        while iterations < opts.max_iter {
            iterations += 1;
            disc.inner_integrals(&u, &mut inner);
            disc.outer(&inner, &mut mapped);
            let mut hit_clamp = false;
            let next: Vec<f64> = u
                .iter()
                .zip(&mapped)
                .map(|(&old, &new)| {
                    let v = (1.0 - omega) * old + omega * new;
                    if !(v > lo && v < hi) {
                        hit_clamp = true;
                    }
                    v.clamp(lo, hi)
                })
                .collect();
            update = sup_diff(&next, &u);
            u = next;
            if update < opts.tol {
                u[n - 1] = disc.theta;
                return Ok((u, iterations));
            }
            let diverging = !update.is_finite() || hit_clamp || update > 2.0 * best_update;
            if diverging {
                omega *= 0.5;
                if omega < 1.0 / 64.0 {
                    return Err(Error::DivergentPicard { omega, update });
                }
                continue 'restart;
            }
            best_update = best_update.min(update);
        }
        return Err(Error::NoConvergence { iterations, residual: update });
    }
}

fn newton(disc: &Discretisation, lo: f64, hi: f64, opts: &SolverOptions) -> Result<(Vec<f64>, usize)> {
    let n = disc.nodes.len();
    let lambda_star = disc.mech.lambda_star();
    // Start from a supersolution when θ ≥ λ*, else from the root itself.
    let mut u = if disc.theta >= lambda_star {
        vec![disc.theta; n]
    } else {
        let mut v = vec![lambda_star; n];
        v[n - 1] = disc.theta;
        v
    };
    let mut inner = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut merit = disc.defect(&u, &mut inner, &mut scratch);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let delta = disc.newton_direction(&u, &inner)?;
        let mut step = 1.0;
        let mut trial_inner = vec![0.0; n];
        loop {
            let trial: Vec<f64> =
                u.iter().zip(&delta).map(|(a, d)| (a + step * d).clamp(lo, hi)).collect();
            let trial_merit = disc.defect(&trial, &mut trial_inner, &mut scratch);
            if trial_merit < merit || step < 1e-3 || merit < opts.tol * 1e-3 {
                let update = sup_diff(&trial, &u);
                u = trial;
                merit = trial_merit;
                std::mem::swap(&mut inner, &mut trial_inner);
                if update < opts.tol && step == 1.0 {
                    u[n - 1] = disc.theta;
                    return Ok((u, iterations));
                }
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::NoConvergence { iterations, residual: merit })
}

/// `∂u/∂r = 2 r^(1−d) ∫_0^r ψ(u(z)) z^(d−1) dz`, with the cumulative
/// integral interpolated linearly between nodes.
pub fn du_dr(sol: &LaplaceGrid, r: f64) -> Result<f64> {
    let Some(i) = sol.grid.locate(r) else {
        return domain(format!("r = {r} outside grid [{}, {}]", sol.grid.nodes()[0], sol.grid.s()));
    };
    let nodes = sol.grid.nodes();
    let t = (r - nodes[i]) / (nodes[i + 1] - nodes[i]);
    let inner = (1.0 - t) * sol.inner[i] + t * sol.inner[i + 1];
    Ok(2.0 * r.powi(1 - sol.dim as i32) * inner)
}

/// `|u(r, s, θ) − u(r, z, u(z, s, θ))|` from nested solves.
#[allow(clippy::too_many_arguments)]
pub fn composition_defect(
    mech: &BranchingMechanism,
    dim: u32,
    r: f64,
    z: f64,
    s: f64,
    theta: f64,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<f64> {
    if !(r > 0.0 && r <= z && z <= s) {
        return domain(format!("composition needs 0 < r <= z <= s, got ({r}, {z}, {s})"));
    }
    let outer = solve_u_on(mech, dim, s, theta, spec, opts)?;
    let direct = evaluate(&outer, r)?;
    let middle = evaluate(&outer, z)?;
    if z == r {
        return Ok((direct - middle).abs());
    }
    let inner = solve_u_on(mech, dim, z, middle, spec, opts)?;
    let nested = evaluate(&inner, r)?;
    Ok((direct - nested).abs())
}

/// Like [`LaplaceGrid::value_at`], but radii below the inner cutoff use the first node.
fn evaluate(sol: &LaplaceGrid, r: f64) -> Result<f64> {
    let first = sol.grid.nodes()[0];
    if r < first && r > 0.0 {
        return Ok(sol.values[0]);
    }
    sol.value_at(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::LevyMeasure;

    fn quad() -> BranchingMechanism {
        BranchingMechanism::quadratic(1.0, 1.0).unwrap()
    }

    fn grid(s: f64, n: usize) -> RadialGrid {
        RadialGrid::new(s, &GridSpec::uniform(n)).unwrap()
    }

    #[test]
    fn root_is_a_fixed_point() {
        let m = quad();
        for method in [SolverMethod::Newton, SolverMethod::Picard] {
            let opts = SolverOptions { method, ..Default::default() };
            let sol = solve_u(&m, 3, 1.5, m.lambda_star(), &grid(1.5, 128), &opts).unwrap();
            assert_eq!(sol.iterations(), 1);
            assert!(sol.values().iter().all(|&v| (v - m.lambda_star()).abs() < 1e-12));
            assert!(du_dr(&sol, 1.0).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn zero_mechanism_keeps_theta() {
        let m = BranchingMechanism::new_unvalidated(0.0, 0.0, LevyMeasure::zero()).unwrap();
        let sol = solve_u(&m, 2, 3.0, 0.7, &grid(3.0, 64), &SolverOptions::default()).unwrap();
        assert!(sol.values().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn newton_and_picard_agree() {
        let m = quad();
        let g = grid(1.0, 256);
        let a = solve_u(&m, 2, 1.0, 2.0, &g, &SolverOptions::default()).unwrap();
        let b = solve_u(&m, 2, 1.0, 2.0, &g, &SolverOptions::picard()).unwrap();
        assert!(sup_diff(a.values(), b.values()) < 1e-9);
        assert!(a.residual() < 1e-10 && b.residual() < 1e-9);
    }

    #[test]
    fn boundary_condition_is_exact() {
        let m = quad();
        let sol = solve_u(&m, 2, 4.0, 2.5, &grid(4.0, 256), &SolverOptions::default()).unwrap();
        assert_eq!(*sol.values().last().unwrap(), 2.5);
    }

    #[test]
    fn mismatched_grid_rejected() {
        let m = quad();
        assert!(solve_u(&m, 2, 2.0, 1.0, &grid(1.0, 64), &SolverOptions::default()).is_err());
        assert!(solve_u(&m, 0, 1.0, 1.0, &grid(1.0, 64), &SolverOptions::default()).is_err());
        assert!(solve_u(&m, 1, 1.0, 2e3, &grid(1.0, 64), &SolverOptions::default()).is_err());
    }

    #[test]
    fn du_dr_outside_grid_is_domain_error() {
        let m = quad();
        let sol = solve_u(&m, 1, 1.0, 2.0, &grid(1.0, 64), &SolverOptions::default()).unwrap();
        assert!(matches!(du_dr(&sol, 1.5), Err(Error::Domain(_))));
        assert!(matches!(du_dr(&sol, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn max_iter_exhaustion_reports_residual() {
        let m = quad();
        let opts = SolverOptions { max_iter: 2, ..SolverOptions::picard() };
        match solve_u(&m, 2, 1.0, 2.0, &grid(1.0, 64), &opts) {
            Err(Error::NoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn picard_without_contraction_gives_up() {
        // s²/d · sup ψ' is far above 2 here, no damping down to 1/64 helps
        let m = quad();
        let err = solve_u(&m, 1, 10.0, 3.0, &grid(10.0, 256), &SolverOptions::picard()).unwrap_err();
        assert!(matches!(err, Error::DivergentPicard { .. }), "{err:?}");
    }

    #[test]
    fn composition_trivial_cases() {
        let m = quad();
        let spec = GridSpec::uniform(256);
        let opts = SolverOptions::default();
        assert!(composition_defect(&m, 2, 0.5, 2.0, 2.0, 1.5, &spec, &opts).unwrap() < 1e-8);
        assert!(composition_defect(&m, 2, 0.5, 0.5, 2.0, 1.5, &spec, &opts).unwrap() < 1e-12);
        assert!(composition_defect(&m, 2, 1.0, 0.5, 2.0, 1.5, &spec, &opts).is_err());
    }
}
