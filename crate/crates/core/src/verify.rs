//! Independent oracles and the end-to-end verification battery.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conditions::{grey_condition, sheu_condition};
use crate::error::{domain, Error, Result};
use crate::flow::{
    build_curve, convergence_report_with, default_flow_grid, extract_psi, limit_laplace_gap, monotonicity_report_with,
    pde_residual, pde_stencil_curve, DEFAULT_RADII,
};
use crate::mechanism::{BranchingMechanism, LevyMeasure};
use crate::sim::{
    extinction_vs_extinguishing, laplace_estimate, martingale_check, simulate_bbm_exit, BbmSpec, CsbpSpec,
};
use crate::solver::{composition_defect, solve_u, GridSpec, RadialGrid, SolverOptions};

/// Integrates the radial boundary-value problem
/// `½u″ + (d−1)/(2r) u′ = ψ(u)`, `u(s) = θ`, regular at the origin,
/// by shooting on `u(ε)` from the first node `ε`, and reports `u` at the
/// requested (increasing) nodes. Regularity is imposed through the leading
/// term of the expansion at the origin, `u′(ε) = 2ψ(u(ε))·ε/d` (which is
/// `≈ 0`); a plain `u′(ε) = 0` would shift the one-dimensional solution by
/// `O(ε)`.
///
/// Each interval between consecutive nodes is covered by `substeps` classic
/// Runge–Kutta steps; `u(ε)` is found by bisection, which is valid because
/// `u(s)` is increasing in the initial value.
pub fn shooting_profile(
    mech: &BranchingMechanism,
    dim: u32,
    nodes: &[f64],
    theta: f64,
    substeps: usize,
) -> Result<Vec<f64>> {
    if dim == 0 {
        return domain("dimension must be at least 1");
    }
    if nodes.len() < 2 || nodes[0] <= 0.0 || nodes.windows(2).any(|w| w[1] <= w[0]) {
        return domain("shooting nodes must be positive and strictly increasing");
    }
    let lambda_star = mech.lambda_star();
    let (mut lo, mut hi) = if theta >= lambda_star { (lambda_star, theta) } else { (theta, lambda_star) };
    if (hi - lo).abs() == 0.0 {
        return Ok(vec![theta; nodes.len()]);
    }
    let ceiling = hi + 10.0 * (1.0 + hi);
    let shoot = |c: f64, record: Option<&mut Vec<f64>>| -> f64 {
        integrate_profile(mech, dim, nodes, c, substeps.max(1), ceiling, record)
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if shoot(mid, None) > theta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut out = Vec::with_capacity(nodes.len());
    let end = shoot(0.5 * (lo + hi), Some(&mut out));
    if !end.is_finite() || out.len() != nodes.len() {
        return Err(Error::Integration(format!("shooting profile escaped to {end}")));
    }
    Ok(out)
}

fn integrate_profile(
    mech: &BranchingMechanism,
    dim: u32,
    nodes: &[f64],
    u0: f64,
    substeps: usize,
    ceiling: f64,
    mut record: Option<&mut Vec<f64>>,
) -> f64 {
    let k = dim as f64 - 1.0;
    let rhs = |r: f64, u: f64, p: f64| -> (f64, f64) { (p, 2.0 * mech.psi(u.max(0.0)) - k / r * p) };
    // regular solutions satisfy u′(r) = 2ψ(u(0))·r/d + O(r³) near the origin
    let (mut u, mut p) = (u0, 2.0 * mech.psi(u0.max(0.0)) * nodes[0] / dim as f64);
    if let Some(rec) = record.as_deref_mut() {
        rec.push(u);
    }
    for w in nodes.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for m in 0..substeps {
            let r = w[0] + m as f64 * h;
            let (a1, b1) = rhs(r, u, p);
            let (a2, b2) = rhs(r + 0.5 * h, u + 0.5 * h * a1, p + 0.5 * h * b1);
            let (a3, b3) = rhs(r + 0.5 * h, u + 0.5 * h * a2, p + 0.5 * h * b2);
            let (a4, b4) = rhs(r + h, u + h * a3, p + h * b3);
            u += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            p += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            if !(u.is_finite() && u < ceiling) {
                return f64::INFINITY;
            }
            if u < -ceiling {
                return f64::NEG_INFINITY;
            }
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.push(u);
        }
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub sup_error: f64,
    pub worst_radius: f64,
    pub iterations: usize,
}

/// Sup-norm distance between the integral-equation solution on `grid` and
/// the shooting profile on the same nodes.
pub fn compare_with_shooting(
    mech: &BranchingMechanism,
    dim: u32,
    theta: f64,
    grid: &RadialGrid,
    opts: &SolverOptions,
) -> Result<OracleComparison> {
    let sol = solve_u(mech, dim, grid.s(), theta, grid, opts)?;
    let oracle = shooting_profile(mech, dim, grid.nodes(), theta, 8)?;
    let (mut sup_error, mut worst_radius) = (0.0, grid.s());
    for ((&r, &u), &o) in grid.nodes().iter().zip(sol.values()).zip(&oracle) {
        if (u - o).abs() > sup_error {
            sup_error = (u - o).abs();
            worst_radius = r;
        }
    }
    Ok(OracleComparison { sup_error, worst_radius, iterations: sol.iterations() })
}

/// The twelve end-to-end checks, in execution order: `(name, property)`.
pub const CRITERIA: [(&str, &str); 12] = [
    ("psi_infinity_closed_form", "limiting mechanism 2·sgn·sqrt of the integrated mechanism"),
    ("solver_vs_shooting", "integral-equation solution agrees with the radial boundary-value problem"),
    ("root_invariance", "Psi(r, lambda*) = 0 for every radius"),
    ("composition", "u(r,s,theta) = u(r,z,u(z,s,theta))"),
    ("pde_residual", "dPsi/dr + 1/2 dPsi^2/dtheta + (d-1)/r Psi = 2 psi"),
    ("monotone_deformation", "Psi(r,theta) monotone in r, direction set by the sign of theta - lambda*"),
    ("uniform_convergence", "sup_theta |Psi(r,theta) - Psi_inf(theta)| decreases to zero"),
    ("limit_laplace", "u(r, r+s, theta) converges to the limiting Laplace exponent"),
    ("grey_sheu_equivalence", "compact-support condition equals Grey's condition for Psi_inf"),
    ("mc_laplace", "simulated CSBP Laplace functional matches the closed form"),
    ("extinction_law", "extinction probability of the Feller CSBP; no extinction when Grey fails"),
    ("martingale_analogue", "E[q^N_s] constant in s for branching Brownian motion; degenerate exit counts"),
];

/// Settings for [`run_battery`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Multiplies every tolerance (including the "k standard errors" factors).
    pub tolerance_scale: f64,
    /// Run only criteria whose name contains this string.
    pub filter: Option<String>,
    pub seed: u64,
    pub mc_paths: usize,
    pub mc_dt: f64,
    pub bbm_runs: usize,
    pub bbm_cap: usize,
    pub flow_grid: GridSpec,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tolerance_scale: 1.0,
            filter: None,
            seed: 20_240_917,
            mc_paths: 100_000,
            mc_dt: 1e-3,
            bbm_runs: 10_000,
            bbm_cap: 1_000,
            flow_grid: default_flow_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub name: String,
    pub property: String,
    pub pass: bool,
    /// The measured quantity compared against `tolerance`.
    pub metric: f64,
    pub tolerance: f64,
    pub detail: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub outcomes: Vec<CriterionOutcome>,
    pub all_pass: bool,
    pub wall_seconds: f64,
}

impl VerifySummary {
    /// One `PASS`/`FAIL` line per criterion.
    pub fn lines(&self) -> Vec<String> {
        self.outcomes
            .iter()
            .map(|o| {
                format!(
                    "{} {:<24} metric={:.3e} tol={:.3e} ({:.2}s) {}",
                    if o.pass { "PASS" } else { "FAIL" },
                    o.name,
                    o.metric,
                    o.tolerance,
                    o.wall_seconds,
                    o.detail
                )
            })
            .collect()
    }
}

/// Runs every selected criterion; a criterion that errors is reported as failed.
pub fn run_battery(cfg: &VerifyConfig) -> Result<VerifySummary> {
    if !(cfg.tolerance_scale > 0.0 && cfg.tolerance_scale.is_finite()) {
        return domain(format!("tolerance scale must be positive, got {}", cfg.tolerance_scale));
    }
    let selected: Vec<&str> = CRITERIA
        .iter()
        .map(|c| c.0)
        .filter(|name| cfg.filter.as_deref().map_or(true, |f| name.contains(f)))
        .collect();
    if selected.is_empty() {
        return domain(format!("no criterion matches filter {:?}", cfg.filter.as_deref().unwrap_or("")));
    }
    let start = Instant::now();
    let outcomes: Vec<CriterionOutcome> = selected.iter().map(|name| run_criterion(name, cfg)).collect();
    Ok(VerifySummary {
        all_pass: outcomes.iter().all(|o| o.pass),
        outcomes,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs a single criterion by name.
pub fn run_criterion(name: &str, cfg: &VerifyConfig) -> CriterionOutcome {
    let property = CRITERIA.iter().find(|c| c.0 == name).map_or("unknown criterion", |c| c.1);
    let start = Instant::now();
    let result = match name {
        "psi_infinity_closed_form" => psi_infinity_closed_form(cfg),
        "solver_vs_shooting" => solver_vs_shooting(cfg),
        "root_invariance" => root_invariance(cfg),
        "composition" => composition(cfg),
        "pde_residual" => pde_residual_check(cfg),
        "monotone_deformation" => monotone_deformation(cfg),
        "uniform_convergence" => uniform_convergence(cfg),
        "limit_laplace" => limit_laplace(cfg),
        "grey_sheu_equivalence" => grey_sheu_equivalence(cfg),
        "mc_laplace" => mc_laplace(cfg),
        "extinction_law" => extinction_law(cfg),
        "martingale_analogue" => martingale_analogue(cfg),
        other => domain(format!("unknown criterion {other:?}")),
    };
    let (pass, metric, tolerance, detail) = match result {
        Ok(c) => (c.pass, c.metric, c.tolerance, c.detail),
        Err(e) => (false, f64::NAN, f64::NAN, format!("error: {e}")),
    };
    CriterionOutcome {
        name: name.to_string(),
        property: property.to_string(),
        pass,
        metric,
        tolerance,
        detail,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

struct Check {
    pass: bool,
    metric: f64,
    tolerance: f64,
    detail: String,
}

impl Check {
    fn within(metric: f64, tolerance: f64, detail: String) -> Self {
        Self { pass: metric <= tolerance, metric, tolerance, detail }
    }
}

fn quadratic() -> BranchingMechanism {
    BranchingMechanism::quadratic(1.0, 1.0).expect("valid mechanism")
}

fn subcritical() -> BranchingMechanism {
    BranchingMechanism::quadratic(-1.0, 1.0).expect("valid mechanism")
}

fn pure_linear() -> BranchingMechanism {
    BranchingMechanism::quadratic(-1.0, 0.0).expect("valid mechanism")
}

/// θ grid on [0, 3] in steps of 0.25, with λ* inserted.
fn theta_grid(lambda_star: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..=12).map(|k| k as f64 * 0.25).collect();
    if lambda_star <= 3.0 {
        t.push(lambda_star);
    }
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    t
}

fn psi_infinity_closed_form(cfg: &VerifyConfig) -> Result<Check> {
    let m = quadratic();
    let e2 = (m.psi_infinity(2.0)? - 1.825742).abs();
    let e0 = (m.psi_infinity(0.0)? + 0.816497).abs();
    Ok(Check::within(e2.max(e0), 1e-6 * cfg.tolerance_scale, format!("|err(2)|={e2:.2e} |err(0)|={e0:.2e}")))
}

fn solver_vs_shooting(cfg: &VerifyConfig) -> Result<Check> {
    let m = quadratic();
    let grid = RadialGrid::new(2.0, &GridSpec::uniform(512))?;
    let cmp = compare_with_shooting(&m, 2, 2.0, &grid, &SolverOptions::picard())?;
    Ok(Check::within(
        cmp.sup_error,
        1e-5 * cfg.tolerance_scale,
        format!("worst at r={:.4}, {} Picard iterations", cmp.worst_radius, cmp.iterations),
    ))
}

fn root_invariance(cfg: &VerifyConfig) -> Result<Check> {
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for (m, d) in [(quadratic(), 2), (subcritical(), 3)] {
        for &r in &DEFAULT_RADII {
            worst = worst.max(extract_psi(&m, d, r, m.lambda_star(), &cfg.flow_grid, &opts)?.abs());
        }
    }
    Ok(Check::within(worst, 1e-6 * cfg.tolerance_scale, "quadratic d=2 and subcritical d=3".into()))
}

fn composition(cfg: &VerifyConfig) -> Result<Check> {
    let m = quadratic();
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for d in 1..=3 {
        for theta in [0.5, 1.0, 2.0] {
            worst = worst.max(composition_defect(&m, d, 0.5, 1.0, 2.0, theta, &GridSpec::uniform(512), &opts)?);
        }
    }
    Ok(Check::within(worst, 5e-6 * cfg.tolerance_scale, "(r,z,s)=(0.5,1,2), d=1..3".into()))
}

fn pde_residual_check(cfg: &VerifyConfig) -> Result<Check> {
    let m = quadratic();
    let opts = SolverOptions::default();
    let residual = |delta: f64| -> Result<f64> {
        let curve = pde_stencil_curve(&m, 2, 5.0, 2.0, delta, &cfg.flow_grid, &opts)?;
        pde_residual(&m, &curve, 5.0, 2.0)
    };
    let coarse = residual(1e-2)?;
    let fine = residual(5e-3)?;
    let tol = 1e-2 * cfg.tolerance_scale;
    Ok(Check {
        pass: coarse <= tol && fine < coarse,
        metric: coarse,
        tolerance: tol,
        detail: format!("residual {coarse:.3e} at step 1e-2, {fine:.3e} at 5e-3"),
    })
}

fn monotone_deformation(cfg: &VerifyConfig) -> Result<Check> {
    let opts = SolverOptions::default();
    let slack = 1e-6 * cfg.tolerance_scale;
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut notes = Vec::new();
    for (label, m, d) in [("subcritical", subcritical(), 3), ("supercritical", quadratic(), 2)] {
        let curve = build_curve(&m, d, &DEFAULT_RADII, &theta_grid(m.lambda_star()), &cfg.flow_grid, &opts)?;
        let rep = monotonicity_report_with(&curve, m.lambda_star(), slack);
        pass &= rep.pass && curve.failures.is_empty();
        worst = worst.max(rep.worst_violation);
        notes.push(format!("{label}: worst {:.1e}", rep.worst_violation));
    }
    Ok(Check { pass, metric: worst, tolerance: slack, detail: notes.join(", ") })
}

fn uniform_convergence(cfg: &VerifyConfig) -> Result<Check> {
    let opts = SolverOptions::default();
    let tol = 0.05 * cfg.tolerance_scale;
    let slack = 1e-6 * cfg.tolerance_scale;
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (label, m, d) in [("quadratic d=2", quadratic(), 2), ("linear d=1", pure_linear(), 1)] {
        let thetas: Vec<f64> = (0..=12).map(|k| k as f64 * 0.25).collect();
        let curve = build_curve(&m, d, &DEFAULT_RADII, &thetas, &cfg.flow_grid, &opts)?;
        let rep = convergence_report_with(&curve, slack);
        pass &= rep.monotone && rep.final_error <= tol && curve.failures.is_empty();
        worst = worst.max(rep.final_error);
        notes.push(format!("{label}: e(50)={:.3e} monotone={}", rep.final_error, rep.monotone));
    }
    Ok(Check { pass, metric: worst, tolerance: tol, detail: notes.join(", ") })
}

fn limit_laplace(cfg: &VerifyConfig) -> Result<Check> {
    let m = quadratic();
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for theta in [0.5, 1.0, 2.0] {
        worst = worst.max(limit_laplace_gap(&m, 2, 50.0, 1.0, theta, &cfg.flow_grid, &opts)?);
    }
    Ok(Check::within(worst, 0.05 * cfg.tolerance_scale, "r=50, s=1, theta in {0.5,1,2}".into()))
}

/// The mechanisms on which the two integral tests are compared.
pub fn condition_battery() -> Vec<(&'static str, BranchingMechanism)> {
    let stable = |b: f64| {
        BranchingMechanism::new(0.0, 0.0, LevyMeasure::stable(1.0, b).expect("valid index")).expect("valid mechanism")
    };
    vec![
        ("quadratic supercritical", quadratic()),
        ("quadratic critical", BranchingMechanism::quadratic(0.0, 1.0).expect("valid mechanism")),
        ("quadratic subcritical", subcritical()),
        ("pure linear", pure_linear()),
        ("stable 0.25", stable(0.25)),
        ("stable 0.5", stable(0.5)),
        ("stable 0.75", stable(0.75)),
        (
            "atom only",
            BranchingMechanism::new(0.0, 0.0, LevyMeasure::atom(1.0, 1.0).expect("valid atom")).expect("valid mechanism"),
        ),
    ]
}

fn grey_sheu_equivalence(_cfg: &VerifyConfig) -> Result<Check> {
    let mut disagreements = 0;
    let mut notes = Vec::new();
    for (label, m) in condition_battery() {
        let sheu = sheu_condition(&m)?;
        let grey = grey_condition(|t| m.psi_infinity(t).unwrap_or(f64::NAN), m.lambda_star() + 1.0)?;
        if sheu.holds != grey.holds {
            disagreements += 1;
        }
        notes.push(format!("{label}: {}", if sheu.holds { "holds" } else { "fails" }));
    }
    Ok(Check {
        pass: disagreements == 0,
        metric: disagreements as f64,
        tolerance: 0.0,
        detail: notes.join("; "),
    })
}

fn mc_laplace(cfg: &VerifyConfig) -> Result<Check> {
    let spec = CsbpSpec::linear(2f64.sqrt()).with_horizon(1.0, cfg.mc_dt);
    let ens = crate::sim::simulate_csbp(&spec, cfg.mc_paths, cfg.seed)?;
    let est = laplace_estimate(ens.require_complete()?, 1.0)?;
    let target = (-(-(2f64).sqrt()).exp()).exp();
    let k = 3.0 * cfg.tolerance_scale;
    Ok(Check {
        pass: est.agrees_with(target, k),
        metric: (est.mean - target).abs(),
        tolerance: est.tolerance(target, k),
        detail: format!("estimate {:.6} (SE {:.1e}) vs {target:.6}, n={}", est.mean, est.std_error, est.n),
    })
}

fn extinction_law(cfg: &VerifyConfig) -> Result<Check> {
    let feller = CsbpSpec::feller(1.0).with_horizon(3.0, cfg.mc_dt);
    let rep = extinction_vs_extinguishing(&feller, cfg.mc_paths, cfg.seed, &[1.0, 3.0, 10.0])?;
    let row = rep.horizons.iter().find(|h| h.horizon == 3.0).expect("horizon 3 present");
    let target = (-1.0f64 / 3.0).exp();
    let k = 3.0 * cfg.tolerance_scale;
    let feller_ok = row.extinct.agrees_with(target, k) && rep.bookkeeping_ok;

    let linear = CsbpSpec::linear(1.0).with_horizon(10.0, 1e-2);
    let lin = extinction_vs_extinguishing(&linear, cfg.mc_paths / 10, cfg.seed, &[1.0, 3.0, 10.0])?;
    let never_hit = !lin.absorption && lin.horizons.iter().all(|h| h.extinct.mean == 0.0);
    let decreasing = lin
        .horizons
        .windows(2)
        .all(|w| matches!((w[0].median_alive, w[1].median_alive), (Some(a), Some(b)) if b < a && b > 0.0));
    Ok(Check {
        pass: feller_ok && never_hit && decreasing,
        metric: (row.extinct.mean - target).abs(),
        tolerance: row.extinct.tolerance(target, k),
        detail: format!(
            "Feller extinct({}) = {:.4} (SE {:.1e}) vs {target:.4}; linear extinct fractions {:?}",
            row.horizon,
            row.extinct.mean,
            row.extinct.std_error,
            lin.horizons.iter().map(|h| h.extinct.mean).collect::<Vec<_>>()
        ),
    })
}

fn martingale_analogue(cfg: &VerifyConfig) -> Result<Check> {
    let k = 3.0 * cfg.tolerance_scale;
    let mut pass = true;
    let mut worst_z: f64 = 0.0;
    let mut notes = Vec::new();
    let mut cap_fraction = 0.0;
    for d in 1..=3 {
        let mut spec = BbmSpec::new(d, 1.0, 0.7, vec![1.0, 2.0, 3.0]);
        spec.cap = cfg.bbm_cap;
        let samples = simulate_bbm_exit(&spec, cfg.bbm_runs, cfg.seed + d as u64)?;
        let rep = martingale_check(&samples, spec.extinction_probability())?;
        pass &= rep.max_pair_z <= k;
        worst_z = worst_z.max(rep.max_pair_z);
        if d == 1 {
            cap_fraction = samples.cap_fraction(2);
        }
        notes.push(format!(
            "d={d}: means {:?}",
            rep.means.iter().map(|m| format!("{:.4}", m.mean)).collect::<Vec<_>>()
        ));
    }
    pass &= cap_fraction > 0.0;
    notes.push(format!("cap-hit fraction at s=3, d=1: {cap_fraction:.3}"));
    Ok(Check { pass, metric: worst_z, tolerance: k, detail: notes.join("; ") })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shooting_matches_linear_closed_form() {
        // ψ(λ) = λ, d = 1: u = θ cosh(√2 r)/cosh(√2 s)
        let m = pure_linear();
        let nodes: Vec<f64> = std::iter::once(2e-4).chain((1..=200).map(|k| k as f64 * 0.01)).collect();
        let u = shooting_profile(&m, 1, &nodes, 1.5, 4).unwrap();
        let k = 2f64.sqrt();
        for (r, v) in nodes.iter().zip(&u) {
            let want = 1.5 * (k * r).cosh() / (k * 2.0).cosh();
            assert!((v - want).abs() < 1e-6, "{r}: {v} vs {want}");
        }
    }

    #[test]
    fn shooting_fixed_point_and_validation() {
        let m = quadratic();
        assert_eq!(shooting_profile(&m, 2, &[0.5, 1.0], 1.0, 4).unwrap(), vec![1.0, 1.0]);
        assert!(shooting_profile(&m, 0, &[0.5, 1.0], 1.0, 4).is_err());
        assert!(shooting_profile(&m, 2, &[1.0, 0.5], 2.0, 4).is_err());
    }

    #[test]
    fn filter_selects_and_rejects() {
        let cfg = VerifyConfig { filter: Some("root_invariance".into()), ..Default::default() };
        let s = run_battery(&cfg).unwrap();
        assert_eq!(s.outcomes.len(), 1);
        assert!(s.all_pass, "{:?}", s.lines());
        let none = VerifyConfig { filter: Some("nope".into()), ..Default::default() };
        assert!(run_battery(&none).is_err());
    }

    #[test]
    fn tight_tolerance_fails() {
        let cfg = VerifyConfig {
            filter: Some("psi_infinity".into()),
            tolerance_scale: 1e-15,
            ..Default::default()
        };
        assert!(!run_battery(&cfg).unwrap().all_pass);
    }

    #[test]
    fn unknown_criterion_is_a_failure() {
        let o = run_criterion("bogus", &VerifyConfig::default());
        assert!(!o.pass && o.detail.contains("unknown"));
    }
}
