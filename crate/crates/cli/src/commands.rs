use exitmass_core::conditions::{grey_condition, sheu_condition};
use exitmass_core::flow::{
    build_curve, convergence_report, default_flow_grid, monotonicity_report, root_invariance_defect,
    MONOTONICITY_SLACK,
};
use exitmass_core::ode::{integrate_scalar, OdeOptions};
use exitmass_core::sim::csbp::simulate_csbp_observed;
use exitmass_core::sim::{
    extinction_vs_extinguishing, laplace_estimate, martingale_check, simulate_bbm_exit, BbmSpec, CsbpSpec,
    MeanEstimate,
};
use exitmass_core::verify::{run_battery, VerifyConfig};
use exitmass_core::{solve_u_on, BranchingMechanism, Error as CoreError, LaplaceGrid};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{levy, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{cell, Output};

/// Root-invariance tolerance for `flow`.
const ROOT_TOL: f64 = 1e-6;
/// Bracketing tolerance for `solve`.
const BRACKET_TOL: f64 = 1e-6;

pub fn mech(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let m = cfg.require_mechanism()?;
    let ls = m.lambda_star();
    let samples = cfg
        .thetas(ls)
        .into_iter()
        .map(|t| Ok(json!({ "theta": t, "psi": m.eval_psi(t)?, "psi_inf": m.psi_infinity(t)? })))
        .collect::<exitmass_core::Result<Vec<_>>>()?;
    let sheu = sheu_condition(&m)?;
    let grey = grey_condition(|t| m.psi_infinity(t).unwrap_or(f64::NAN), ls + 1.0)?;
    let equivalence_ok = sheu.holds == grey.holds;
    out.write_json(
        "mech_report.json",
        cfg,
        &json!({
            "alpha": m.alpha(),
            "beta": m.beta(),
            "levy": m.levy_summary(),
            "lambda_star": ls,
            "criticality": m.criticality(),
            "psi_inf_samples": samples,
            "sheu": sheu,
            "grey_of_psi_inf": grey,
            "equivalence_ok": equivalence_ok,
        }),
    )?;
    println!(
        "lambda* = {ls}  sheu {}  grey(psi_inf) {}  equivalence {}",
        verdict(sheu.holds),
        verdict(grey.holds),
        if equivalence_ok { "ok" } else { "VIOLATED" }
    );
    if !equivalence_ok {
        return Err(CliError::Invariant("Sheu's condition and Grey's condition for psi_inf disagree".into()));
    }
    Ok(())
}

fn verdict(holds: bool) -> &'static str {
    if holds {
        "holds"
    } else {
        "fails"
    }
}

#[derive(Serialize)]
struct SolveJob {
    file: String,
    s: f64,
    theta: f64,
    dim: u32,
    iterations: usize,
    residual: f64,
    psi: f64,
}

pub fn solve(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let m = cfg.require_mechanism()?;
    let (spec, opts, dim) = (cfg.grid_spec(), cfg.solver_options(), cfg.grid.dim);
    let jobs: Vec<(f64, f64)> = cfg
        .schedule
        .s
        .iter()
        .flat_map(|&s| cfg.thetas(m.lambda_star()).into_iter().map(move |t| (s, t)))
        .collect();
    let results: Vec<exitmass_core::Result<LaplaceGrid>> =
        jobs.par_iter().map(|&(s, t)| solve_u_on(&m, dim, s, t, &spec, &opts)).collect();
    let mut summary = Vec::with_capacity(jobs.len());
    for (k, (&(s, theta), res)) in jobs.iter().zip(results).enumerate() {
        let sol = res?;
        check_bracketing(&m, &sol)?;
        let name = format!("solve_{k:03}.csv");
        let header = json!({
            "s": s, "theta": theta, "dim": dim, "iterations": sol.iterations(), "residual": sol.residual(),
        });
        let mut text = format!("# {header}\nr,u,du_dr\n");
        for ((r, u), d) in sol.grid().nodes().iter().zip(sol.values()).zip(sol.derivatives()) {
            text.push_str(&format!("{r:?},{u:?},{d:?}\n"));
        }
        out.write_text(&name, &text)?;
        summary.push(SolveJob {
            file: name,
            s,
            theta,
            dim,
            iterations: sol.iterations(),
            residual: sol.residual(),
            psi: *sol.derivatives().last().expect("non-empty grid"),
        });
    }
    out.write_json("solve_summary.json", cfg, &json!({ "jobs": summary }))?;
    println!("solved {} jobs", summary.len());
    Ok(())
}

fn check_bracketing(m: &BranchingMechanism, sol: &LaplaceGrid) -> CliResult<()> {
    let (lo, hi) = (sol.theta().min(m.lambda_star()), sol.theta().max(m.lambda_star()));
    if let Some(v) = sol.values().iter().find(|&&v| v < lo - BRACKET_TOL || v > hi + BRACKET_TOL) {
        return Err(CliError::Invariant(format!(
            "u = {v} leaves [{lo}, {hi}] for s = {}, theta = {}",
            sol.s(),
            sol.theta()
        )));
    }
    Ok(())
}

pub fn flow(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let m = cfg.require_mechanism()?;
    let ls = m.lambda_star();
    let mut spec = cfg.grid_spec();
    if spec.max_step.is_none() {
        // resolve the boundary layer at large radii unless told otherwise
        spec.max_step = default_flow_grid().max_step;
    }
    let opts = cfg.solver_options();
    let thetas = cfg.thetas(ls);
    let radii = &cfg.schedule.radii;
    let curve = build_curve(&m, cfg.grid.dim, radii, &thetas, &spec, &opts)?;
    let mono = monotonicity_report(&curve, ls);
    let conv = convergence_report(&curve);
    let root_defect_max = match curve.root_defect() {
        Some(d) => d,
        None => root_invariance_defect(&m, cfg.grid.dim, radii, &spec, &opts)?,
    };
    let mut csv = curve.to_long_csv();
    if csv.is_empty() {
        csv.push('\n');
    }
    out.write_text("curve.csv", &csv)?;
    out.write_json(
        "flow_summary.json",
        cfg,
        &json!({
            "radii": conv.radii,
            "e_of_r": conv.e_of_r,
            "e_final": conv.final_error,
            "convergence_monotone": conv.monotone,
            "monotone_ok": mono.pass,
            "monotonicity": mono,
            "monotonicity_slack": MONOTONICITY_SLACK,
            "root_defect_max": root_defect_max,
            "convexity_violation": curve.convexity_violation(),
            "sign_violation": curve.sign_violation(),
            "failed_cells": curve.failures,
            "lambda_star": ls,
        }),
    )?;
    println!(
        "e(r_max) = {:.3e}  monotone {}  root defect {:.1e}",
        conv.final_error, mono.pass, root_defect_max
    );
    if !mono.pass {
        return Err(CliError::Invariant(format!(
            "monotone deformation violated by {:.3e}",
            mono.worst_violation
        )));
    }
    if root_defect_max > ROOT_TOL {
        return Err(CliError::Invariant(format!("|Psi(r, lambda*)| reaches {root_defect_max:.3e}")));
    }
    Ok(())
}

fn csbp_spec(cfg: &RunConfig) -> CliResult<CsbpSpec> {
    let s = &cfg.sim;
    let mut spec = CsbpSpec::new(s.q, s.a, s.b, levy(&s.atoms, s.stable)?)
        .with_initial_mass(s.initial_mass)
        .with_horizon(s.horizon, s.dt)
        .with_floor(s.absorb.then_some(s.z_floor));
    spec.step_budget = s.step_budget;
    spec.record_events = false;
    Ok(spec)
}

/// `e^{−a0·u(t)}` with `du/dt = −F(u)`, `u(0) = θ`.
/// Accuracy allowance for the ODE reference, which is integrated to 1e-10;
/// matters only when the estimate is deterministic (zero standard error).
const REFERENCE_SLACK: f64 = 1e-8;

fn analytic_laplace(spec: &CsbpSpec, t: f64, theta: f64) -> exitmass_core::Result<f64> {
    let u = integrate_scalar(|_, u| -spec.mechanism(u.max(0.0)), 0.0, theta, t, OdeOptions::default(), |_, u| {
        if u.is_finite() {
            Ok(())
        } else {
            Err(CoreError::Integration("Laplace exponent blew up".into()))
        }
    })?;
    Ok((-spec.initial_mass * u).exp())
}

#[derive(Serialize)]
struct LaplaceRow {
    theta: f64,
    est: f64,
    se: f64,
    analytic: f64,
    within_3se: bool,
}

pub fn simulate(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    match cfg.sim.mode.as_str() {
        "bbm" => simulate_bbm(cfg, out),
        "extinction" => simulate_extinction(cfg, out),
        _ => simulate_paths(cfg, out),
    }
}

fn simulate_paths(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let spec = csbp_spec(cfg)?;
    let ens = simulate_csbp_observed(&spec, cfg.sim.paths, cfg.seed, &[spec.horizon])?;
    ens.require_complete()?;
    let mut rows = Vec::new();
    for &theta in &cfg.sim.thetas {
        let est: MeanEstimate = laplace_estimate(&ens, theta)?;
        let analytic = analytic_laplace(&spec, spec.horizon, theta)?;
        let within_3se = (est.mean - analytic).abs() <= 3.0 * est.std_error + REFERENCE_SLACK;
        rows.push(LaplaceRow { theta, est: est.mean, se: est.std_error, analytic, within_3se });
    }
    let extinct = ens.extinct_fraction(0)?;
    let exploded = ens.exploded_fraction(0)?;
    if cfg.sim.dump_paths {
        let mut csv = String::from("path,terminal,absorbed_at,exploded_at\n");
        for (i, p) in ens.paths.iter().enumerate() {
            csv.push_str(&format!("{i},{:?},{},{}\n", p.terminal(), cell(p.absorbed_at), cell(p.exploded_at)));
        }
        out.write_text("paths.csv", &csv)?;
    }
    let failed: Vec<f64> = rows.iter().filter(|r| !r.within_3se).map(|r| r.theta).collect();
    out.write_json(
        "ensemble.json",
        cfg,
        &json!({
            "mode": "csbp",
            "n": ens.paths.len(),
            "seed": ens.seed,
            "dt": ens.dt,
            "horizon": ens.horizon,
            "extinct_frac": extinct.mean,
            "exploded_frac": exploded.mean,
            "laplace": rows,
        }),
    )?;
    for r in &rows {
        println!("theta {}: {:.6} +/- {:.1e} (analytic {:.6})", r.theta, r.est, r.se, r.analytic);
    }
    if !failed.is_empty() {
        return Err(CliError::MonteCarlo(format!("Laplace estimate outside 3 SE at theta = {failed:?}")));
    }
    Ok(())
}

fn simulate_extinction(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let spec = csbp_spec(cfg)?;
    let rep = extinction_vs_extinguishing(&spec, cfg.sim.paths, cfg.seed, &cfg.sim.horizons)?;
    out.write_json(
        "ensemble.json",
        cfg,
        &json!({
            "mode": "extinction",
            "n": cfg.sim.paths,
            "seed": cfg.seed,
            "dt": spec.dt,
            "horizon": cfg.sim.horizons.last(),
            "extinct_frac": rep.horizons.last().map(|h| h.extinct.mean),
            "exploded_frac": rep.horizons.last().map(|h| h.exploded_frac),
            "report": rep,
        }),
    )?;
    for h in &rep.horizons {
        println!(
            "horizon {}: extinct {:.4} (SE {:.1e}, expected {})  extinguishing {:.4}  exploded {:.4}",
            h.horizon,
            h.extinct.mean,
            h.extinct.std_error,
            h.expected_extinct.map_or("-".into(), |e| format!("{e:.4}")),
            h.extinguishing_frac,
            h.exploded_frac
        );
    }
    if !rep.pass {
        return Err(CliError::MonteCarlo("extinction law check failed".into()));
    }
    Ok(())
}

fn simulate_bbm(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let s = &cfg.sim;
    let mut spec = BbmSpec::new(s.dim, s.rate, s.p2, s.radii.clone());
    spec.start_radius = s.start_radius;
    spec.cap = s.cap;
    let samples = simulate_bbm_exit(&spec, s.paths, cfg.seed)?;
    let q = spec.extinction_probability();
    let rep = martingale_check(&samples, q)?;
    let per_radius: Vec<_> = (0..spec.radii.len())
        .map(|k| {
            json!({
                "radius": spec.radii[k],
                "mean_count": samples.mean_count(k).map(|m| m.mean),
                "cap_fraction": samples.cap_fraction(k),
                "q_power_mean": rep.means[k].mean,
                "q_power_se": rep.means[k].std_error,
            })
        })
        .collect();
    if s.dump_paths {
        let mut csv = String::from("run");
        for r in &spec.radii {
            csv.push_str(&format!(",N_{r}"));
        }
        csv.push('\n');
        for (i, run) in samples.counts.iter().enumerate() {
            csv.push_str(&i.to_string());
            for c in run {
                csv.push_str(&format!(",{c}"));
            }
            csv.push('\n');
        }
        out.write_text("paths.csv", &csv)?;
    }
    out.write_json(
        "ensemble.json",
        cfg,
        &json!({
            "mode": "bbm",
            "n": s.paths,
            "seed": cfg.seed,
            "q_ext": q,
            "radii": per_radius,
            "martingale": rep,
        }),
    )?;
    println!("q_ext = {q:.6}  max pairwise z = {:.3}  pass {}", rep.max_pair_z, rep.pass);
    if !rep.pass {
        return Err(CliError::MonteCarlo("E[q^N_s] varies across radii by more than 3 SE".into()));
    }
    Ok(())
}

pub fn verify(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let v = &cfg.verify;
    let battery = VerifyConfig {
        tolerance_scale: v.tolerance_scale,
        filter: v.filter.clone(),
        seed: cfg.seed,
        mc_paths: v.mc_paths,
        bbm_runs: v.bbm_runs,
        bbm_cap: v.bbm_cap,
        ..VerifyConfig::default()
    };
    let summary = run_battery(&battery).map_err(|e| CliError::config(e.to_string()))?;
    for line in summary.lines() {
        println!("{line}");
    }
    out.write_json("verify_summary.json", cfg, &summary)?;
    if !summary.all_pass {
        let failed: Vec<&str> = summary.outcomes.iter().filter(|o| !o.pass).map(|o| o.name.as_str()).collect();
        return Err(CliError::Verify(format!("{} failed: {}", failed.len(), failed.join(", "))));
    }
    Ok(())
}
