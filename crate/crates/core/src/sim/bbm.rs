//! Branching Brownian motion in `R^d` stopped on a nested family of spheres.
//!
//! Particles move as standard Brownian motions (generator `½Δ`), die at rate
//! `ρ` and leave 0 or 2 offspring. For each target radius in turn, every
//! particle is followed until it dies or first reaches the sphere; the
//! particles on the sphere are counted (`N_s`) and then released towards
//! the next radius.
//!
//! Motion uses Gaussian steps of length `min(remaining lifetime, κ·dist²)`,
//! where `dist` is the distance to the sphere, and an exit between the two
//! endpoints is detected with the Brownian-bridge crossing probability of
//! the tangent half-space, `exp(−2·d0·d1/h)`.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::path_rng;
use super::stats::{variance_with_error, MeanEstimate};
use crate::error::{domain, Result};

/// Step length as a fraction of the squared distance to the sphere.
const STEP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbmSpec {
    pub dim: u32,
    pub branch_rate: f64,
    /// Probability of no offspring; `p2 = 1 − p0`.
    pub p0: f64,
    pub p2: f64,
    pub start_radius: f64,
    pub radii: Vec<f64>,
    /// Population size treated as "infinitely many exits".
    pub cap: usize,
    #[serde(default = "one")]
    pub initial_particles: usize,
}

fn one() -> usize {
    1
}

impl BbmSpec {
    pub fn new(dim: u32, branch_rate: f64, p2: f64, radii: Vec<f64>) -> Self {
        Self {
            dim,
            branch_rate,
            p0: 1.0 - p2,
            p2,
            start_radius: 0.0,
            radii,
            cap: 1_000_000,
            initial_particles: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return domain("dimension must be at least 1");
        }
        if !(self.branch_rate > 0.0 && self.branch_rate.is_finite()) {
            return domain(format!("branch rate must be positive, got {}", self.branch_rate));
        }
        if !(self.p0 >= 0.0 && self.p2 >= 0.0 && (self.p0 + self.p2 - 1.0).abs() < 1e-12) {
            return domain(format!("offspring law must satisfy p0 + p2 = 1, got ({}, {})", self.p0, self.p2));
        }
        if !(self.start_radius >= 0.0 && self.start_radius.is_finite()) {
            return domain("start radius must be finite and >= 0");
        }
        if self.radii.is_empty() || self.radii[0] <= 0.0 || self.radii.windows(2).any(|w| w[1] <= w[0]) {
            return domain("target radii must be positive and strictly increasing");
        }
        if self.cap == 0 || self.initial_particles == 0 {
            return domain("particle cap and initial particle count must be positive");
        }
        Ok(())
    }

    /// Extinction probability of the offspring process, `min(1, p0/p2)`.
    pub fn extinction_probability(&self) -> f64 {
        if self.p2 <= self.p0 {
            1.0
        } else {
            self.p0 / self.p2
        }
    }
}

/// Number of particles frozen on a sphere; `Infinite` when the cap was hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCount {
    Finite(u64),
    Infinite,
}

impl ExitCount {
    pub fn finite(self) -> Option<u64> {
        match self {
            Self::Finite(n) => Some(n),
            Self::Infinite => None,
        }
    }

    /// `q^N`, with `q^∞ = 0`.
    pub fn generating(self, q: f64) -> f64 {
        match self {
            Self::Finite(n) => q.powf(n as f64),
            Self::Infinite => 0.0,
        }
    }
}

impl fmt::Display for ExitCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(n) => write!(f, "{n}"),
            Self::Infinite => f.write_str("+inf"),
        }
    }
}

impl Serialize for ExitCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(n) => s.serialize_u64(*n),
            Self::Infinite => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExitCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Ok(Self::Finite(n)),
            Raw::Text(t) if t == "+inf" => Ok(Self::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("invalid exit count {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbmSamples {
    pub radii: Vec<f64>,
    pub seed: u64,
    /// `counts[run][k]` is `N` at `radii[k]` for that run.
    pub counts: Vec<Vec<ExitCount>>,
}

impl BbmSamples {
    pub fn column(&self, k: usize) -> Vec<ExitCount> {
        self.counts.iter().map(|run| run[k]).collect()
    }

    /// Fraction of runs that hit the particle cap by radius `k`.
    pub fn cap_fraction(&self, k: usize) -> f64 {
        let hits = self.counts.iter().filter(|run| run[k] == ExitCount::Infinite).count();
        hits as f64 / self.counts.len() as f64
    }

    /// Mean of `N` at radius `k`; `None` if some run hit the cap.
    pub fn mean_count(&self, k: usize) -> Option<MeanEstimate> {
        let xs: Option<Vec<f64>> = self.column(k).iter().map(|c| c.finite().map(|n| n as f64)).collect();
        MeanEstimate::from_samples(&xs?).ok()
    }
}

/// Runs `n_runs` independent sphere sweeps.
pub fn simulate_bbm_exit(spec: &BbmSpec, n_runs: usize, seed: u64) -> Result<BbmSamples> {
    simulate_runs(spec, n_runs, seed, 0)
}

fn simulate_runs(spec: &BbmSpec, n_runs: usize, seed: u64, first_stream: u64) -> Result<BbmSamples> {
    spec.validate()?;
    if n_runs == 0 {
        return domain("number of runs must be positive");
    }
    let counts = (0..n_runs)
        .into_par_iter()
        .map(|i| sweep(spec, &mut path_rng(seed, first_stream + i as u64)))
        .collect();
    Ok(BbmSamples { radii: spec.radii.clone(), seed, counts })
}

fn sweep(spec: &BbmSpec, rng: &mut ChaCha8Rng) -> Vec<ExitCount> {
    let d = spec.dim as usize;
    let mut start = vec![0.0; d];
    start[0] = spec.start_radius;
    let mut active: Vec<Vec<f64>> = vec![start; spec.initial_particles];
    let mut out = Vec::with_capacity(spec.radii.len());
    for &s in &spec.radii {
        let mut frozen: Vec<Vec<f64>> = Vec::new();
        while let Some(mut x) = active.pop() {
            match run_particle(spec, s, &mut x, rng) {
                Fate::Exited => frozen.push(x),
                Fate::Died => {}
                Fate::Split => {
                    active.push(x.clone());
                    active.push(x);
                }
            }
            if active.len() + frozen.len() > spec.cap {
                out.resize(spec.radii.len(), ExitCount::Infinite);
                return out;
            }
        }
        out.push(ExitCount::Finite(frozen.len() as u64));
        active = frozen;
    }
    out
}

enum Fate {
    Exited,
    Died,
    Split,
}

/// Follows one particle until it reaches radius `s` or its lifetime ends.
fn run_particle(spec: &BbmSpec, s: f64, x: &mut [f64], rng: &mut ChaCha8Rng) -> Fate {
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let project = |x: &mut [f64]| {
        let r = norm(x);
        if r > 0.0 {
            x.iter_mut().for_each(|v| *v *= s / r);
        } else {
            x[0] = s;
        }
    };
    let lifetime: f64 = rng.sample::<f64, _>(Exp1) / spec.branch_rate;
    let mut left = lifetime;
    loop {
        let d0 = s - norm(x);
        if d0 <= 0.0 {
            project(x);
            return Fate::Exited;
        }
        let h = left.min(STEP_FRACTION * d0 * d0);
        let sd = h.sqrt();
        for v in x.iter_mut() {
            *v += sd * rng.sample::<f64, _>(StandardNormal);
        }
        let d1 = s - norm(x);
        if d1 <= 0.0 || rng.random::<f64>() < (-2.0 * d0 * d1 / h).exp() {
            project(x);
            return Fate::Exited;
        }
        left -= h;
        if left <= 0.0 {
            return if rng.random::<f64>() < spec.p2 { Fate::Split } else { Fate::Died };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub q_ext: f64,
    pub radii: Vec<f64>,
    /// Mean of `q^N` per radius.
    pub means: Vec<MeanEstimate>,
    /// Largest `|m_i − m_j| / √(se_i² + se_j²)` over pairs of radii.
    pub max_pair_z: f64,
    pub pass: bool,
}

/// Checks that `E[q^N_s]` does not depend on `s`.
pub fn martingale_check(samples: &BbmSamples, q_ext: f64) -> Result<MartingaleReport> {
    if !(q_ext > 0.0 && q_ext <= 1.0) {
        return domain(format!("q_ext must lie in (0, 1], got {q_ext}"));
    }
    if samples.counts.is_empty() {
        return domain("no samples");
    }
    let means = (0..samples.radii.len())
        .map(|k| {
            let xs: Vec<f64> = samples.column(k).iter().map(|c| c.generating(q_ext)).collect();
            MeanEstimate::from_samples(&xs)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_pair_z: f64 = 0.0;
    let mut pass = true;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let gap = (means[i].mean - means[j].mean).abs();
            let pooled = (means[i].std_error.powi(2) + means[j].std_error.powi(2)).sqrt();
            pass &= gap <= 3.0 * pooled + 1e-12;
            if pooled > 0.0 {
                max_pair_z = max_pair_z.max(gap / pooled);
            } else if gap > 1e-12 {
                max_pair_z = f64::INFINITY;
            }
        }
    }
    Ok(MartingaleReport { q_ext, radii: samples.radii.clone(), means, max_pair_z, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingPropertyReport {
    pub radius: f64,
    pub pair_mean: MeanEstimate,
    pub convolved_mean: MeanEstimate,
    pub pair_variance: (f64, f64),
    pub convolved_variance: (f64, f64),
    pub pass: bool,
}

/// Compares `N_s` started from two particles with the sum of two
/// independent single-particle runs (means and variances within 3 SE).
pub fn branching_property_check(spec: &BbmSpec, n_runs: usize, seed: u64) -> Result<Vec<BranchingPropertyReport>> {
    let pair_spec = BbmSpec { initial_particles: 2, ..spec.clone() };
    let single_spec = BbmSpec { initial_particles: 1, ..spec.clone() };
    let pairs = simulate_runs(&pair_spec, n_runs, seed, 0)?;
    let singles = simulate_runs(&single_spec, 2 * n_runs, seed, n_runs as u64)?;
    let mut reports = Vec::with_capacity(spec.radii.len());
    for (k, &radius) in spec.radii.iter().enumerate() {
        let finite = |c: ExitCount| {
            c.finite().map(|n| n as f64).ok_or_else(|| crate::Error::Domain("particle cap hit".into()))
        };
        let a: Vec<f64> = pairs.column(k).into_iter().map(finite).collect::<Result<_>>()?;
        let one = singles.column(k);
        let b: Vec<f64> = one
            .chunks(2)
            .map(|c| Ok(finite(c[0])? + finite(c[1])?))
            .collect::<Result<_>>()?;
        let (ma, mb) = (MeanEstimate::from_samples(&a)?, MeanEstimate::from_samples(&b)?);
        let (va, vb) = (variance_with_error(&a)?, variance_with_error(&b)?);
        let mean_ok = (ma.mean - mb.mean).abs() <= 3.0 * ma.std_error.hypot(mb.std_error) + 1e-12;
        let var_ok = (va.0 - vb.0).abs() <= 3.0 * va.1.hypot(vb.1) + 1e-12;
        reports.push(BranchingPropertyReport {
            radius,
            pair_mean: ma,
            convolved_mean: mb,
            pair_variance: va,
            convolved_variance: vb,
            pass: mean_ok && var_ok,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_branching_gives_zero_or_one() {
        let spec = BbmSpec::new(2, 1.0, 0.0, vec![0.5, 1.0, 2.0]);
        let out = simulate_bbm_exit(&spec, 2000, 4).unwrap();
        let means: Vec<f64> = (0..3).map(|k| out.mean_count(k).unwrap().mean).collect();
        assert!(out.counts.iter().flatten().all(|c| matches!(c, ExitCount::Finite(0 | 1))));
        assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
        let m = martingale_check(&out, 1.0).unwrap();
        assert!(m.pass && m.means.iter().all(|e| e.mean == 1.0));
    }

    #[test]
    fn exit_from_outside_is_immediate() {
        let mut spec = BbmSpec::new(3, 1.0, 0.5, vec![1.0]);
        spec.start_radius = 2.0;
        let out = simulate_bbm_exit(&spec, 10, 0).unwrap();
        assert!(out.counts.iter().all(|c| c[0] == ExitCount::Finite(1)));
    }

    #[test]
    fn cap_marks_remaining_radii() {
        let mut spec = BbmSpec::new(1, 5.0, 1.0, vec![3.0, 4.0]);
        spec.cap = 50;
        let out = simulate_bbm_exit(&spec, 20, 2).unwrap();
        assert!(out.counts.iter().all(|c| c == &[ExitCount::Infinite, ExitCount::Infinite]));
        assert_eq!(out.cap_fraction(1), 1.0);
        assert!(out.mean_count(0).is_none());
        assert_eq!(ExitCount::Infinite.generating(0.5), 0.0);
    }

    #[test]
    fn exit_count_json() {
        let v = vec![ExitCount::Finite(3), ExitCount::Infinite];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[3,"+inf"]"#);
        assert_eq!(serde_json::from_str::<Vec<ExitCount>>(&s).unwrap(), v);
    }

    #[test]
    fn validation() {
        assert!(simulate_bbm_exit(&BbmSpec::new(0, 1.0, 0.5, vec![1.0]), 1, 0).is_err());
        assert!(simulate_bbm_exit(&BbmSpec::new(1, 1.0, 0.5, vec![2.0, 1.0]), 1, 0).is_err());
        assert!(simulate_bbm_exit(&BbmSpec::new(1, 1.0, 0.5, vec![1.0]), 0, 0).is_err());
        let mut bad = BbmSpec::new(1, 1.0, 0.5, vec![1.0]);
        bad.p0 = 0.2;
        assert!(bad.validate().is_err());
        assert!((BbmSpec::new(1, 1.0, 0.7, vec![1.0]).extinction_probability() - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn critical_mean_is_one() {
        let spec = BbmSpec::new(2, 1.0, 0.5, vec![1.0, 2.0]);
        let out = simulate_bbm_exit(&spec, 4000, 8).unwrap();
        for k in 0..2 {
            let m = out.mean_count(k).unwrap();
            assert!(m.agrees_with(1.0, 4.0), "{m:?}");
        }
    }
}
