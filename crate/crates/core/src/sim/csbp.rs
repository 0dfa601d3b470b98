//! Euler-type simulation of a continuous-state branching process with
//! mechanism `F(θ) = −q + aθ + bθ² + ∫(e^{−θx} − 1 + θx) Λ(dx)`.
//!
//! Per step of length `h` from state `Z`:
//!
//! * explosion to the `+∞` trap with probability `1 − e^{−qZh}`;
//! * exact linear decay `Z·e^{−(a + m)h}`, where `m = ∫_{x≥ε} x Λ(dx)` is
//!   the compensator of the simulated jumps;
//! * a Gaussian increment `√(2b′Zh)·N(0,1)` with
//!   `b′ = b + ½∫_{x<ε} x² Λ(dx)` absorbing the small jumps (`ε = 0.01`);
//! * `Poisson(Z·Λ([ε,∞))·h)` jumps with sizes drawn from `Λ` restricted to `[ε, ∞)`.
//!
//! With absorption enabled a state below `z_floor` is sent to the `0` trap;
//! otherwise negative Euler excursions are reflected, so that discretisation
//! cannot manufacture extinction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path_rng;
use super::stats::MeanEstimate;
use crate::conditions::{grey_condition, ConditionVerdict};
use crate::error::{domain, Error, Result};
use crate::mechanism::LevyMeasure;

/// Jumps below this size are replaced by their variance contribution.
pub const JUMP_CUTOFF: f64 = 0.01;

/// Terminal values below this (but never absorbed) count as "extinguishing".
pub const EXTINGUISHING_LEVEL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsbpSpec {
    /// Explosion coefficient `q ≥ 0`, so that `F(0) = −q`.
    pub explosion: f64,
    /// Linear coefficient `a`.
    pub drift: f64,
    /// Quadratic coefficient `b ≥ 0`.
    pub diffusion: f64,
    pub jumps: LevyMeasure,
    pub initial_mass: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Absorption threshold; `None` disables absorption (reflection instead).
    pub z_floor: Option<f64>,
    /// Upper bound on the total number of Euler steps over the ensemble.
    #[serde(default)]
    pub step_budget: Option<u64>,
    /// Keep a per-path log of jumps and trap events.
    #[serde(default)]
    pub record_events: bool,
}

impl CsbpSpec {
    pub fn new(explosion: f64, drift: f64, diffusion: f64, jumps: LevyMeasure) -> Self {
        Self {
            explosion,
            drift,
            diffusion,
            jumps,
            initial_mass: 1.0,
            horizon: 1.0,
            dt: 1e-3,
            z_floor: Some(1e-8),
            step_budget: None,
            record_events: false,
        }
    }

    /// `F(θ) = aθ`.
    pub fn linear(a: f64) -> Self {
        Self::new(0.0, a, 0.0, LevyMeasure::zero())
    }

    /// `F(θ) = bθ²`.
    pub fn feller(b: f64) -> Self {
        Self::new(0.0, 0.0, b, LevyMeasure::zero())
    }

    pub fn with_horizon(mut self, horizon: f64, dt: f64) -> Self {
        self.horizon = horizon;
        self.dt = dt;
        self
    }

    pub fn with_initial_mass(mut self, a0: f64) -> Self {
        self.initial_mass = a0;
        self
    }

    pub fn with_floor(mut self, z_floor: Option<f64>) -> Self {
        self.z_floor = z_floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.explosion, self.drift, self.diffusion, self.initial_mass, self.horizon, self.dt];
        if finite.iter().any(|v| !v.is_finite()) {
            return domain("CSBP coefficients must be finite");
        }
        if self.explosion < 0.0 || self.diffusion < 0.0 {
            return domain("explosion and diffusion coefficients must be non-negative");
        }
        if !(self.initial_mass > 0.0) {
            return domain(format!("initial mass must be positive, got {}", self.initial_mass));
        }
        if !(self.horizon > 0.0 && self.dt > 0.0) {
            return domain("horizon and dt must be positive");
        }
        if let Some(floor) = self.z_floor {
            if !(floor >= 0.0 && floor.is_finite()) {
                return domain(format!("z_floor must be a finite non-negative number, got {floor}"));
            }
        }
        Ok(())
    }

    /// The mechanism `F(θ)`.
    pub fn mechanism(&self, theta: f64) -> f64 {
        -self.explosion + self.drift * theta + self.diffusion * theta * theta + self.jumps.laplace_exponent(theta)
    }

    /// Largest zero of `F` (`F ≤ 0` exactly on `[0, root]` by convexity).
    pub fn mechanism_root(&self) -> Result<f64> {
        if self.explosion == 0.0 && self.drift >= 0.0 {
            return Ok(0.0);
        }
        let cap = 1e6;
        let mut hi = 1.0;
        while self.mechanism(hi) <= 0.0 {
            hi *= 2.0;
            if hi > cap {
                return Err(Error::RootSearchOverflow { cap });
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-13 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.mechanism(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn dynamics(&self) -> Dynamics {
        let mut big_atoms = Vec::new();
        let mut small_variance = 0.0;
        let mut compensator = 0.0;
        for atom in self.jumps.atoms() {
            if atom.location >= JUMP_CUTOFF {
                big_atoms.push((atom.location, atom.mass));
                compensator += atom.location * atom.mass;
            } else {
                small_variance += atom.location * atom.location * atom.mass;
            }
        }
        let stable = self.jumps.stable_component().map(|s| {
            small_variance += s.head_second_moment(JUMP_CUTOFF);
            compensator += s.tail_first_moment(JUMP_CUTOFF);
            (s.tail_mass(JUMP_CUTOFF), s.index)
        });
        let atom_rate: f64 = big_atoms.iter().map(|a| a.1).sum();
        Dynamics {
            decay: self.drift + compensator,
            diffusion: self.diffusion + 0.5 * small_variance,
            explosion: self.explosion,
            atom_rate,
            jump_rate: atom_rate + stable.map_or(0.0, |s| s.0),
            big_atoms,
            stable,
        }
    }
}

struct Dynamics {
    decay: f64,
    diffusion: f64,
    explosion: f64,
    atom_rate: f64,
    jump_rate: f64,
    big_atoms: Vec<(f64, f64)>,
    /// `(Λ([ε,∞)), index)` of the stable part.
    stable: Option<(f64, f64)>,
}

impl Dynamics {
    fn jump_size(&self, rng: &mut ChaCha8Rng) -> f64 {
        let mut pick = rng.random::<f64>() * self.jump_rate;
        if pick < self.atom_rate {
            for &(x, m) in &self.big_atoms {
                if pick < m {
                    return x;
                }
                pick -= m;
            }
            // rounding: fall back to the last atom
            if let Some(&(x, _)) = self.big_atoms.last() {
                return x;
            }
        }
        match self.stable {
            // Pareto tail Λ([x,∞)) ∝ x^(−1−index) above the cutoff
            Some((_, index)) => JUMP_CUTOFF * (1.0 - rng.random::<f64>()).powf(-1.0 / (1.0 + index)),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathEvent {
    Jump { time: f64, size: f64 },
    Reflected { time: f64 },
    Absorbed { time: f64 },
    Exploded { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PathState {
    Alive { value: f64 },
    Absorbed { time: f64 },
    Exploded { time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    /// `Z` at each observation time: `0` once absorbed, `+∞` once exploded.
    pub observations: Vec<f64>,
    pub absorbed_at: Option<f64>,
    pub exploded_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<PathEvent>>,
}

impl PathRecord {
    pub fn terminal(&self) -> f64 {
        *self.observations.last().expect("at least one observation")
    }

    pub fn state(&self) -> PathState {
        match (self.absorbed_at, self.exploded_at) {
            (Some(time), _) => PathState::Absorbed { time },
            (_, Some(time)) => PathState::Exploded { time },
            _ => PathState::Alive { value: self.terminal() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    /// Paths requested; `paths.len()` is smaller when the step budget ran out.
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub observation_times: Vec<f64>,
    pub absorption: bool,
    pub budget_exhausted: bool,
    pub paths: Vec<PathRecord>,
}

impl PathEnsemble {
    /// Fails with [`Error::StepBudget`] if the ensemble is partial.
    pub fn require_complete(&self) -> Result<&Self> {
        if self.budget_exhausted {
            Err(Error::StepBudget { completed: self.paths.len(), requested: self.n_paths })
        } else {
            Ok(self)
        }
    }

    fn fraction(&self, pred: impl Fn(&PathRecord) -> bool) -> Result<MeanEstimate> {
        let xs: Vec<f64> = self.paths.iter().map(|p| if pred(p) { 1.0 } else { 0.0 }).collect();
        MeanEstimate::from_samples(&xs)
    }

    /// Fraction of paths absorbed at 0 by observation `k`.
    pub fn extinct_fraction(&self, k: usize) -> Result<MeanEstimate> {
        self.observation_time(k)?;
        self.fraction(|p| p.absorbed_at.is_some() && p.observations[k] == 0.0)
    }

    /// Fraction of paths exploded by observation `k`.
    pub fn exploded_fraction(&self, k: usize) -> Result<MeanEstimate> {
        self.observation_time(k)?;
        self.fraction(|p| p.observations[k] == f64::INFINITY)
    }

    fn observation_time(&self, k: usize) -> Result<f64> {
        self.observation_times
            .get(k)
            .copied()
            .ok_or_else(|| Error::Domain(format!("no observation with index {k}")))
    }
}

/// Simulates `n_paths` paths up to `spec.horizon`, observed at the horizon only.
pub fn simulate_csbp(spec: &CsbpSpec, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    simulate_csbp_observed(spec, n_paths, seed, &[spec.horizon])
}

/// Simulates `n_paths` paths observed at the increasing `times` (the last
/// one replaces `spec.horizon`).
pub fn simulate_csbp_observed(spec: &CsbpSpec, n_paths: usize, seed: u64, times: &[f64]) -> Result<PathEnsemble> {
    spec.validate()?;
    if n_paths == 0 {
        return domain("number of paths must be positive");
    }
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return domain("observation times must be positive and strictly increasing");
    }
    // Step counts per segment; each segment is split into equal steps of length ≤ dt.
    let mut segments = Vec::with_capacity(times.len());
    let mut prev = 0.0;
    for &t in times {
        let k = (((t - prev) / spec.dt) - 1e-9).ceil().max(1.0) as u64;
        segments.push((k, (t - prev) / k as f64));
        prev = t;
    }
    let steps_per_path: u64 = segments.iter().map(|s| s.0).sum();
    let runnable = match spec.step_budget {
        Some(budget) => n_paths.min((budget / steps_per_path.max(1)) as usize),
        None => n_paths,
    };
    let dynamics = spec.dynamics();
    let paths: Vec<PathRecord> = (0..runnable)
        .into_par_iter()
        .map(|i| simulate_path(spec, &dynamics, &segments, &mut path_rng(seed, i as u64)))
        .collect();
    Ok(PathEnsemble {
        n_paths,
        seed,
        dt: spec.dt,
        horizon: *times.last().unwrap(),
        observation_times: times.to_vec(),
        absorption: spec.z_floor.is_some(),
        budget_exhausted: runnable < n_paths,
        paths,
    })
}

fn simulate_path(spec: &CsbpSpec, dyn_: &Dynamics, segments: &[(u64, f64)], rng: &mut ChaCha8Rng) -> PathRecord {
    let mut z = spec.initial_mass;
    let mut t = 0.0;
    let mut record = PathRecord {
        observations: Vec::with_capacity(segments.len()),
        absorbed_at: None,
        exploded_at: None,
        events: spec.record_events.then(Vec::new),
    };
    let log = |rec: &mut PathRecord, e: PathEvent| {
        if let Some(ev) = rec.events.as_mut() {
            ev.push(e);
        }
    };
    for &(steps, h) in segments {
        let decay = (-dyn_.decay * h).exp();
        for step in 0..steps {
            if z == 0.0 || z == f64::INFINITY {
                // traps: skip to the end of the segment
                t += (steps - step) as f64 * h;
                break;
            }
            let t_next = t + h;
            if dyn_.explosion > 0.0 && rng.random::<f64>() < -(-dyn_.explosion * z * h).exp_m1() {
                z = f64::INFINITY;
                record.exploded_at = Some(t_next);
                log(&mut record, PathEvent::Exploded { time: t_next });
                t = t_next;
                continue;
            }
            let mut next = z * decay;
            if dyn_.diffusion > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                next += (2.0 * dyn_.diffusion * z * h).sqrt() * n;
            }
            if dyn_.jump_rate > 0.0 {
                let mean = z * dyn_.jump_rate * h;
                let count = Poisson::new(mean).map_or(0.0, |p| p.sample(rng)) as u64;
                for _ in 0..count {
                    let size = dyn_.jump_size(rng);
                    next += size;
                    log(&mut record, PathEvent::Jump { time: t_next, size });
                }
            }
            match spec.z_floor {
                Some(floor) if next < floor || next <= 0.0 => {
                    next = 0.0;
                    record.absorbed_at = Some(t_next);
                    log(&mut record, PathEvent::Absorbed { time: t_next });
                }
                None if next < 0.0 => {
                    next = -next;
                    log(&mut record, PathEvent::Reflected { time: t_next });
                }
                None if next == 0.0 => {
                    record.absorbed_at = Some(t_next);
                    log(&mut record, PathEvent::Absorbed { time: t_next });
                }
                _ => {}
            }
            z = next;
            t = t_next;
        }
        record.observations.push(z);
    }
    record
}

/// Mean of `e^{−θZ}` at the horizon, with `e^{−θ·∞} = 0`.
pub fn laplace_estimate(ensemble: &PathEnsemble, theta: f64) -> Result<MeanEstimate> {
    laplace_estimate_at(ensemble, ensemble.observation_times.len().saturating_sub(1), theta)
}

/// Mean of `e^{−θZ}` at observation `k`, with `e^{−θ·∞} = 0`.
pub fn laplace_estimate_at(ensemble: &PathEnsemble, k: usize, theta: f64) -> Result<MeanEstimate> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return domain(format!("theta must be finite and >= 0, got {theta}"));
    }
    if ensemble.paths.is_empty() {
        return domain("empty ensemble");
    }
    ensemble.observation_time(k)?;
    let xs: Vec<f64> = ensemble
        .paths
        .iter()
        .map(|p| {
            let z = p.observations[k];
            if z == f64::INFINITY {
                0.0
            } else {
                (-theta * z).exp()
            }
        })
        .collect();
    MeanEstimate::from_samples(&xs)
}

/// `ū(h)` solving `∫_ū^∞ dθ / F(θ) = h`: the limit of the Laplace exponent
/// at horizon `h` as `θ → ∞`, so that `P(extinct by h) = e^{−a0·ū(h)}`.
/// Requires Grey's condition.
pub fn extinction_envelope(spec: &CsbpSpec, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return domain(format!("horizon must be positive, got {h}"));
    }
    let root = spec.mechanism_root()?;
    let tail = |u: f64| -> Result<f64> {
        let v = grey_condition(|x| spec.mechanism(x), u)?;
        if !v.holds {
            return domain(format!("Grey's condition fails from {u}: {}", v.diagnostics));
        }
        Ok(v.integral_estimate.value())
    };
    let mut hi = root + 1.0;
    while tail(hi)? > h {
        hi *= 2.0;
        if hi > 1e12 {
            return domain("extinction envelope out of range");
        }
    }
    let mut lo = root;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
        if tail(mid)? > h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: f64,
    pub extinct: MeanEstimate,
    pub extinguishing_frac: f64,
    pub exploded_frac: f64,
    pub surviving_frac: f64,
    /// Median of the finite, unabsorbed terminal values (if any).
    pub median_alive: Option<f64>,
    /// `e^{−a0·ū(h)}` when Grey's condition holds.
    pub expected_extinct: Option<f64>,
    pub within_3se: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub grey: ConditionVerdict,
    pub absorption: bool,
    pub mechanism_root: f64,
    /// `e^{−λ*·a0}`, the extinguishing probability.
    pub limit_extinct: f64,
    pub horizons: Vec<HorizonSummary>,
    pub bookkeeping_ok: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Extinction (hitting 0) against extinguishing (`Z → 0`) across horizons.
/// Absorption at `z_floor` is used only when Grey's condition holds.
pub fn extinction_vs_extinguishing(
    spec: &CsbpSpec,
    n_paths: usize,
    seed: u64,
    horizons: &[f64],
) -> Result<ExtinctionReport> {
    spec.validate()?;
    let root = spec.mechanism_root()?;
    let grey = grey_condition(|x| spec.mechanism(x), root + 1.0)?;
    let mut run = spec.clone();
    run.z_floor = if grey.holds { spec.z_floor.or(Some(1e-8)) } else { None };
    let ens = simulate_csbp_observed(&run, n_paths, seed, horizons)?;
    let mut notes = Vec::new();
    if ens.budget_exhausted {
        notes.push(format!("step budget exhausted: {} of {} paths", ens.paths.len(), n_paths));
    }
    let n = ens.paths.len() as f64;
    let mut rows = Vec::with_capacity(horizons.len());
    let mut bookkeeping_ok = true;
    for (k, &h) in horizons.iter().enumerate() {
        let extinct = ens.extinct_fraction(k)?;
        let exploded = ens.exploded_fraction(k)?.mean;
        let mut alive: Vec<f64> = ens
            .paths
            .iter()
            .map(|p| p.observations[k])
            .filter(|z| z.is_finite() && *z > 0.0)
            .collect();
        let extinguishing = alive.iter().filter(|&&z| z < EXTINGUISHING_LEVEL).count() as f64 / n;
        let surviving = alive.len() as f64 / n;
        alive.sort_by(f64::total_cmp);
        let median_alive = (!alive.is_empty()).then(|| alive[alive.len() / 2]);
        bookkeeping_ok &= (extinct.mean + exploded + surviving - 1.0).abs() < 1e-12;
        let expected = if grey.holds { Some((-spec.initial_mass * extinction_envelope(spec, h)?).exp()) } else { None };
        rows.push(HorizonSummary {
            horizon: h,
            within_3se: expected.map(|e| extinct.agrees_with(e, 3.0)),
            extinct,
            extinguishing_frac: extinguishing,
            exploded_frac: exploded,
            surviving_frac: surviving,
            median_alive,
            expected_extinct: expected,
        });
    }
    let pass = bookkeeping_ok
        && if grey.holds {
            rows.iter().all(|r| r.within_3se == Some(true))
        } else {
            let never_hit = rows.iter().all(|r| r.extinct.mean == 0.0);
            let growing = rows.windows(2).all(|w| w[1].extinguishing_frac >= w[0].extinguishing_frac);
            if !never_hit {
                notes.push("paths hit 0 although Grey's condition fails".into());
            }
            never_hit && growing
        };
    Ok(ExtinctionReport {
        grey,
        absorption: run.z_floor.is_some(),
        mechanism_root: root,
        limit_extinct: (-root * spec.initial_mass).exp(),
        horizons: rows,
        bookkeeping_ok,
        pass,
        notes,
    })
}
