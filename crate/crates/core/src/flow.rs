//! The radius-dependent branching mechanism `Ψ(r, θ)` of the exit-mass
//! process, its invariants, and its convergence to Ψ∞.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mechanism::BranchingMechanism;
use crate::ode::{integrate_scalar, OdeOptions};
use crate::solver::{solve_u_on, GridSpec, SolverOptions};

/// Default radius schedule.
pub const DEFAULT_RADII: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

/// Grid used for flow computations unless the caller overrides it: uniform
/// with spacing at most 0.01, so boundary layers at large radii stay resolved.
pub fn default_flow_grid() -> GridSpec {
    GridSpec::resolving(0.01)
}

/// `Ψ(r, θ) = ∂u/∂r (r, r, θ) = 2 r^(1−d) ∫_0^r ψ(u(z, r, θ)) z^(d−1) dz`.
pub fn extract_psi(
    mech: &BranchingMechanism,
    dim: u32,
    r: f64,
    theta: f64,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<f64> {
    if !(r > 0.0) {
        return domain(format!("radius must be positive, got {r}"));
    }
    let sol = solve_u_on(mech, dim, r, theta, spec, opts)?;
    Ok(*sol.derivatives().last().expect("grid is non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub radius_index: usize,
    pub theta_index: usize,
    pub message: String,
}

/// `Ψ(r, θ)` sampled on a radius × θ product grid, with Ψ∞ per θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismCurve {
    pub radii: Vec<f64>,
    pub thetas: Vec<f64>,
    /// `psi_values[i][j] = Ψ(radii[i], thetas[j])`; `None` marks a failed cell.
    pub psi_values: Vec<Vec<Option<f64>>>,
    pub psi_inf_values: Vec<f64>,
    pub dim: u32,
    pub lambda_star: f64,
    pub mech_id: String,
    pub failures: Vec<CellFailure>,
}

impl MechanismCurve {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.psi_values.get(i).and_then(|row| row.get(j)).copied().flatten()
    }

    /// Largest `|Ψ(r, λ*)|` over the radii, if λ* is one of the θ samples.
    pub fn root_defect(&self) -> Option<f64> {
        let j = self.thetas.iter().position(|&t| (t - self.lambda_star).abs() < 1e-12)?;
        Some((0..self.radii.len()).filter_map(|i| self.get(i, j)).map(f64::abs).fold(0.0, f64::max))
    }

    /// Worst negative second divided difference over all rows (0 when every row is convex).
    pub fn convexity_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.radii.len() {
            for j in 1..self.thetas.len().saturating_sub(1) {
                let (Some(a), Some(b), Some(c)) = (self.get(i, j - 1), self.get(i, j), self.get(i, j + 1)) else {
                    continue;
                };
                let (t0, t1, t2) = (self.thetas[j - 1], self.thetas[j], self.thetas[j + 1]);
                // value at t1 of the chord through (t0, a) and (t2, c), minus b
                let chord = a + (c - a) * (t1 - t0) / (t2 - t0);
                worst = worst.max(b - chord);
            }
        }
        worst
    }

    /// Worst violation of `Ψ(r, θ)·(θ − λ*) ≥ 0`.
    pub fn sign_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.radii.len() {
            for (j, &t) in self.thetas.iter().enumerate() {
                if let Some(v) = self.get(i, j) {
                    worst = worst.max(-(v * (t - self.lambda_star)));
                }
            }
        }
        worst
    }

    /// Long-format CSV: `r,theta,psi,psi_inf,abs_err` (failed cells leave psi and abs_err empty).
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("r,theta,psi,psi_inf,abs_err\n");
        for (i, r) in self.radii.iter().enumerate() {
            for (j, t) in self.thetas.iter().enumerate() {
                let inf = self.psi_inf_values[j];
                match self.get(i, j) {
                    Some(p) => out.push_str(&format!("{r:?},{t:?},{p:?},{inf:?},{:?}\n", (p - inf).abs())),
                    None => out.push_str(&format!("{r:?},{t:?},,{inf:?},\n")),
                }
            }
        }
        out
    }
}

/// Evaluates [`extract_psi`] over `radii × thetas` in parallel.
pub fn build_curve(
    mech: &BranchingMechanism,
    dim: u32,
    radii: &[f64],
    thetas: &[f64],
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<MechanismCurve> {
    if radii.is_empty() || thetas.is_empty() {
        return domain("radius and theta schedules must be non-empty");
    }
    let cells: Vec<(usize, usize)> =
        (0..radii.len()).flat_map(|i| (0..thetas.len()).map(move |j| (i, j))).collect();
    let results: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(i, j)| extract_psi(mech, dim, radii[i], thetas[j], spec, opts))
        .collect();
    let mut psi_values = vec![vec![None; thetas.len()]; radii.len()];
    let mut failures = Vec::new();
    for (&(i, j), res) in cells.iter().zip(results) {
        match res {
            Ok(v) => psi_values[i][j] = Some(v),
            Err(e) => failures.push(CellFailure { radius_index: i, theta_index: j, message: e.to_string() }),
        }
    }
    if failures.len() * 10 > cells.len() {
        return Err(Error::CurveFailures {
            failed: failures.len(),
            total: cells.len(),
            first: failures[0].message.clone(),
        });
    }
    let psi_inf_values = thetas.iter().map(|&t| mech.psi_infinity(t)).collect::<Result<Vec<_>>>()?;
    Ok(MechanismCurve {
        radii: radii.to_vec(),
        thetas: thetas.to_vec(),
        psi_values,
        psi_inf_values,
        dim,
        lambda_star: mech.lambda_star(),
        mech_id: format!(
            "alpha={} beta={} levy={}",
            mech.alpha(),
            mech.beta(),
            mech.levy_summary()
        ),
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    NonDecreasing,
    NonIncreasing,
    /// θ = λ*: Ψ vanishes, so both orderings must hold.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnCheck {
    pub theta: f64,
    pub expected: Ordering,
    pub pass: bool,
    pub worst_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub pass: bool,
    pub worst_violation: f64,
    pub columns: Vec<ColumnCheck>,
}

pub const MONOTONICITY_SLACK: f64 = 1e-6;

/// Checks how each θ-column of the curve moves with r: non-decreasing for
/// θ > λ*, non-increasing for θ < λ* (only possible when supercritical).
pub fn monotonicity_report(curve: &MechanismCurve, lambda_star: f64) -> MonotonicityReport {
    monotonicity_report_with(curve, lambda_star, MONOTONICITY_SLACK)
}

/// [`monotonicity_report`] with an explicit slack.
pub fn monotonicity_report_with(curve: &MechanismCurve, lambda_star: f64, slack: f64) -> MonotonicityReport {
    let mut columns = Vec::with_capacity(curve.thetas.len());
    for (j, &theta) in curve.thetas.iter().enumerate() {
        let expected = if (theta - lambda_star).abs() < 1e-12 {
            Ordering::Constant
        } else if theta > lambda_star {
            Ordering::NonDecreasing
        } else {
            Ordering::NonIncreasing
        };
        let column: Vec<f64> = (0..curve.radii.len()).filter_map(|i| curve.get(i, j)).collect();
        let mut worst: f64 = 0.0;
        for w in column.windows(2) {
            let rise = w[1] - w[0];
            let violation = match expected {
                Ordering::NonDecreasing => -rise,
                Ordering::NonIncreasing => rise,
                Ordering::Constant => rise.abs(),
            };
            worst = worst.max(violation);
        }
        columns.push(ColumnCheck { theta, expected, pass: worst <= slack, worst_violation: worst });
    }
    let worst_violation = columns.iter().map(|c| c.worst_violation).fold(0.0, f64::max);
    MonotonicityReport { pass: columns.iter().all(|c| c.pass), worst_violation, columns }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub radii: Vec<f64>,
    /// `e(r) = max_θ |Ψ(r, θ) − Ψ∞(θ)|`.
    pub e_of_r: Vec<f64>,
    pub monotone: bool,
    pub worst_increase: f64,
    pub final_error: f64,
}

/// Sup-norm distance to Ψ∞ per radius, and whether it decays along the schedule.
pub fn convergence_report(curve: &MechanismCurve) -> ConvergenceReport {
    convergence_report_with(curve, MONOTONICITY_SLACK)
}

/// [`convergence_report`] with an explicit slack on increases of `e(r)`.
pub fn convergence_report_with(curve: &MechanismCurve, slack: f64) -> ConvergenceReport {
    let e_of_r: Vec<f64> = (0..curve.radii.len())
        .map(|i| {
            (0..curve.thetas.len())
                .filter_map(|j| curve.get(i, j).map(|v| (v - curve.psi_inf_values[j]).abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    let worst_increase = e_of_r.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    ConvergenceReport {
        radii: curve.radii.clone(),
        final_error: *e_of_r.last().unwrap_or(&0.0),
        monotone: worst_increase <= slack,
        worst_increase,
        e_of_r,
    }
}

/// `|Ψ(r, λ*)|` maximised over `radii`, computed directly.
pub fn root_invariance_defect(
    mech: &BranchingMechanism,
    dim: u32,
    radii: &[f64],
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<f64> {
    let values: Vec<Result<f64>> = radii
        .par_iter()
        .map(|&r| extract_psi(mech, dim, r, mech.lambda_star(), spec, opts))
        .collect();
    let mut worst: f64 = 0.0;
    for v in values {
        worst = worst.max(v?.abs());
    }
    Ok(worst)
}

/// Laplace exponent of the limiting CSBP: `du/ds = −Ψ∞(u)`, `u(0) = θ`.
pub fn solve_u_infinity(mech: &BranchingMechanism, s: f64, theta: f64) -> Result<f64> {
    if !(s.is_finite() && s >= 0.0) {
        return domain(format!("s must be finite and >= 0, got {s}"));
    }
    if !(theta.is_finite() && theta >= 0.0) {
        return domain(format!("theta must be finite and >= 0, got {theta}"));
    }
    let lambda_star = mech.lambda_star();
    if theta == lambda_star {
        return Ok(lambda_star);
    }
    let upper = theta.max(lambda_star) + 1.0;
    integrate_scalar(
        |_, u| -mech.psi_infinity_unchecked(u.max(0.0)),
        0.0,
        theta,
        s,
        OdeOptions::default(),
        |t, u| {
            if u < -1e-12 || u > upper {
                Err(Error::Integration(format!("u_inf left [0, {upper}] at s = {t}: {u}")))
            } else {
                Ok(())
            }
        },
    )
}

/// Samples Ψ on the 3 × 3 stencil `{r−δ, r, r+δ} × {θ−δ, θ, θ+δ}` with the
/// grid node count frozen at radius `r`, so discretisation error varies
/// smoothly across the stencil.
pub fn pde_stencil_curve(
    mech: &BranchingMechanism,
    dim: u32,
    r: f64,
    theta: f64,
    delta: f64,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<MechanismCurve> {
    if !(delta > 0.0 && r - delta > 0.0 && theta - delta >= 0.0) {
        return domain(format!("stencil of width {delta} does not fit at (r, theta) = ({r}, {theta})"));
    }
    let frozen = spec.frozen_for(r);
    build_curve(mech, dim, &[r - delta, r, r + delta], &[theta - delta, theta, theta + delta], &frozen, opts)
}

fn stencil_index(values: &[f64], x: f64) -> Result<usize> {
    let k = values
        .iter()
        .position(|&v| (v - x).abs() <= 1e-12 * x.abs().max(1.0))
        .ok_or_else(|| Error::Domain(format!("{x} is not a sample of the curve")))?;
    if k == 0 || k + 1 >= values.len() {
        return domain(format!("insufficient stencil around {x}"));
    }
    Ok(k)
}

/// `|∂rΨ + ½ ∂θΨ² + (d−1)/r Ψ − 2ψ(θ)|` by central differences on the curve.
pub fn pde_residual(mech: &BranchingMechanism, curve: &MechanismCurve, r: f64, theta: f64) -> Result<f64> {
    let i = stencil_index(&curve.radii, r)?;
    let j = stencil_index(&curve.thetas, theta)?;
    let cell = |a: usize, b: usize| {
        curve.get(a, b).ok_or_else(|| Error::Domain(format!("stencil cell ({a}, {b}) failed")))
    };
    let center = cell(i, j)?;
    let dr = (cell(i + 1, j)? - cell(i - 1, j)?) / (curve.radii[i + 1] - curve.radii[i - 1]);
    let up = cell(i, j + 1)?;
    let down = cell(i, j - 1)?;
    let dsq = (up * up - down * down) / (curve.thetas[j + 1] - curve.thetas[j - 1]);
    let lhs = dr + 0.5 * dsq + (curve.dim as f64 - 1.0) / r * center;
    Ok((lhs - 2.0 * mech.eval_psi(theta)?).abs())
}

/// `|u(r, r + s, θ) − u∞(s, θ)|`.
pub fn limit_laplace_gap(
    mech: &BranchingMechanism,
    dim: u32,
    r: f64,
    s: f64,
    theta: f64,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<f64> {
    let sol = solve_u_on(mech, dim, r + s, theta, spec, opts)?;
    let finite = sol.value_at(r)?;
    let limit = solve_u_infinity(mech, s, theta)?;
    Ok((finite - limit).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::LevyMeasure;

    fn quad() -> BranchingMechanism {
        BranchingMechanism::quadratic(1.0, 1.0).unwrap()
    }

    fn zero() -> BranchingMechanism {
        BranchingMechanism::new_unvalidated(0.0, 0.0, LevyMeasure::zero()).unwrap()
    }

    #[test]
    fn psi_vanishes_at_root() {
        let m = quad();
        let v = extract_psi(&m, 2, 3.0, m.lambda_star(), &GridSpec::default(), &Default::default()).unwrap();
        assert!(v.abs() < 1e-6);
    }

    #[test]
    fn zero_mechanism_curve_is_flat() {
        let m = zero();
        let curve =
            build_curve(&m, 2, &[1.0, 2.0], &[0.0, 1.0, 2.0], &GridSpec::uniform(128), &Default::default()).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(curve.get(i, j), Some(0.0));
            }
        }
        let rep = convergence_report(&curve);
        assert!(rep.e_of_r.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn single_cell_curve() {
        let m = quad();
        let curve = build_curve(&m, 2, &[1.0], &[m.lambda_star()], &GridSpec::uniform(128), &Default::default())
            .unwrap();
        assert!(curve.get(0, 0).unwrap().abs() < 1e-8);
        assert!(monotonicity_report(&curve, m.lambda_star()).pass);
    }

    #[test]
    fn empty_schedules_rejected() {
        let m = quad();
        assert!(build_curve(&m, 2, &[], &[1.0], &GridSpec::default(), &Default::default()).is_err());
    }

    #[test]
    fn u_infinity_fixed_point_and_linear_closed_form() {
        let m = quad();
        assert_eq!(solve_u_infinity(&m, 3.0, m.lambda_star()).unwrap(), m.lambda_star());
        let lin = BranchingMechanism::quadratic(-1.0, 0.0).unwrap();
        for (s, theta) in [(0.5, 1.0), (1.0, 2.0), (3.0, 0.3)] {
            let got = solve_u_infinity(&lin, s, theta).unwrap();
            let want = theta * (-(2f64).sqrt() * s).exp();
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn u_infinity_critical_quadratic_closed_form() {
        // Ψ∞(θ) = (2/√3) θ^{3/2}: u^{−1/2}(s) = θ^{−1/2} + s/√3
        let m = BranchingMechanism::quadratic(0.0, 1.0).unwrap();
        for (s, theta) in [(1.0, 1.0), (2.0, 5.0), (0.3, 100.0)] {
            let got = solve_u_infinity(&m, s, theta).unwrap();
            let want = (theta.powf(-0.5) + s / 3f64.sqrt()).powi(-2);
            assert!((got - want).abs() < 1e-8 * want.max(1.0), "{got} vs {want}");
        }
        // large θ approaches the envelope 3/s²
        let env = solve_u_infinity(&m, 2.0, 1e3).unwrap();
        assert!((env - 0.75).abs() < 0.05);
    }

    #[test]
    fn u_infinity_supercritical_rises_to_root() {
        let m = quad();
        let a = solve_u_infinity(&m, 1.0, 0.2).unwrap();
        let b = solve_u_infinity(&m, 3.0, 0.2).unwrap();
        assert!(0.2 < a && a < b && b < m.lambda_star());
    }

    #[test]
    fn pde_residual_zero_double() {
        let m = zero();
        let curve = pde_stencil_curve(&m, 2, 2.0, 1.0, 0.01, &GridSpec::uniform(128), &Default::default()).unwrap();
        assert_eq!(pde_residual(&m, &curve, 2.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn pde_residual_needs_stencil() {
        let m = quad();
        let curve = build_curve(&m, 2, &[1.0, 2.0], &[1.0, 2.0], &GridSpec::uniform(64), &Default::default()).unwrap();
        assert!(matches!(pde_residual(&m, &curve, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(pde_stencil_curve(&m, 2, 1.0, 0.0, 0.01, &GridSpec::uniform(64), &Default::default()).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = quad();
        let curve = build_curve(&m, 1, &[1.0, 2.0], &[0.0, 2.0], &GridSpec::uniform(64), &Default::default()).unwrap();
        let csv = curve.to_long_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "r,theta,psi,psi_inf,abs_err");
        assert_eq!(lines.len(), 5);
    }
}
