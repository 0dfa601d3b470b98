//! Run configuration: a TOML file with optional sections
//! `[mechanism]`, `[grid]`, `[schedule]`, `[sim]` and `[verify]`, overridden
//! by command-line flags. A file with top-level `alpha`/`beta`/`atoms`/
//! `stable` keys and no sections is read as a bare mechanism.
//!
//! ```toml
//! seed = 7
//!
//! [mechanism]
//! alpha = 1.0
//! beta = 1.0
//! atoms = [[0.5, 2.0]]        # [location, mass] pairs
//! stable = { c = 1.0, b = 0.5 }
//!
//! [grid]
//! dim = 2
//! nodes = 512
//!
//! [schedule]
//! radii = [1, 2, 5, 10, 20, 50]
//! thetas = [0, 0.5, 1, 2]
//! ```

use std::path::{Path, PathBuf};

use exitmass_core::flow::DEFAULT_RADII;
use exitmass_core::solver::{SolverMethod, SpacingPolicy, MIN_NODES};
use exitmass_core::{Atom, BranchingMechanism, GridSpec, LevyMeasure, SolverOptions, StableDensity};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    mechanism: Option<MechanismSection>,
    grid: Option<GridSection>,
    schedule: Option<ScheduleSection>,
    sim: Option<SimSection>,
    verify: Option<VerifySection>,
    // bare mechanism file
    alpha: Option<f64>,
    beta: Option<f64>,
    atoms: Option<Vec<[f64; 2]>>,
    stable: Option<StableSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableSection {
    pub c: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    /// Mechanism file, relative to the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stable: Option<StableSection>,
    /// Accept mechanisms with bounded ψ (e.g. ψ ≡ 0) as test doubles.
    #[serde(default)]
    pub skip_validation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dim: u32,
    pub nodes: usize,
    /// `uniform` or `geometric`.
    pub policy: String,
    pub inner_fraction: f64,
    pub max_step: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// `newton` or `picard`.
    pub method: String,
    pub omega: f64,
    pub theta_max: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        let o = SolverOptions::default();
        Self {
            dim: 2,
            nodes: g.nodes,
            policy: "uniform".into(),
            inner_fraction: g.inner_fraction,
            max_step: None,
            tol: o.tol,
            max_iter: o.max_iter,
            method: "newton".into(),
            omega: o.omega,
            theta_max: o.theta_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub radii: Vec<f64>,
    /// θ samples; defaults to 0, 0.25, …, 3 with λ* inserted.
    pub thetas: Option<Vec<f64>>,
    /// Outer radii of `solve` jobs.
    pub s: Vec<f64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { radii: DEFAULT_RADII.to_vec(), thetas: None, s: vec![2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// `csbp`, `extinction` or `bbm`.
    pub mode: String,
    pub paths: usize,
    // CSBP: F(θ) = −q + aθ + bθ² + jumps
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub atoms: Vec<[f64; 2]>,
    pub stable: Option<StableSection>,
    pub initial_mass: f64,
    pub horizon: f64,
    pub dt: f64,
    pub absorb: bool,
    pub z_floor: f64,
    pub step_budget: Option<u64>,
    pub thetas: Vec<f64>,
    pub horizons: Vec<f64>,
    pub dump_paths: bool,
    // BBM
    pub dim: u32,
    pub rate: f64,
    pub p2: f64,
    pub start_radius: f64,
    pub radii: Vec<f64>,
    pub cap: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            mode: "csbp".into(),
            paths: 10_000,
            q: 0.0,
            a: 0.0,
            b: 1.0,
            atoms: Vec::new(),
            stable: None,
            initial_mass: 1.0,
            horizon: 1.0,
            dt: 1e-3,
            absorb: true,
            z_floor: 1e-8,
            step_budget: None,
            thetas: vec![0.5, 1.0, 2.0],
            horizons: vec![1.0, 3.0, 10.0],
            dump_paths: false,
            dim: 1,
            rate: 1.0,
            p2: 0.7,
            start_radius: 0.0,
            radii: vec![1.0, 2.0, 3.0],
            cap: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub tolerance_scale: f64,
    pub filter: Option<String>,
    pub mc_paths: usize,
    pub bbm_runs: usize,
    pub bbm_cap: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        let v = exitmass_core::verify::VerifyConfig::default();
        Self {
            tolerance_scale: v.tolerance_scale,
            filter: None,
            mc_paths: v.mc_paths,
            bbm_runs: v.bbm_runs,
            bbm_cap: v.bbm_cap,
        }
    }
}

/// Fully resolved configuration; embedded verbatim in every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub mechanism: Option<MechanismSection>,
    pub grid: GridSection,
    pub schedule: ScheduleSection,
    pub sim: SimSection,
    pub verify: VerifySection,
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub filter: Option<String>,
    pub tolerance_scale: Option<f64>,
}

pub const DEFAULT_SEED: u64 = 20_240_917;

/// Where validation errors point.
struct Source<'a> {
    path: Option<&'a Path>,
    text: &'a str,
}

impl Source<'_> {
    fn error(&self, section: Option<&str>, key: Option<&str>, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.map(Path::to_path_buf),
            line: self.locate(section, key),
            message: message.into(),
        }
    }

    /// 1-based line of `key = …` inside `[section]` (or of the section header).
    fn locate(&self, section: Option<&str>, key: Option<&str>) -> Option<usize> {
        let mut current: Option<String> = None;
        let mut header_line = None;
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
                current = Some(name.trim().to_string());
                if section == Some(name.trim()) {
                    header_line = Some(i + 1);
                }
                continue;
            }
            if current.as_deref() != section {
                continue;
            }
            if let Some(k) = key {
                if let Some((lhs, _)) = line.split_once('=') {
                    if lhs.trim() == k {
                        return Some(i + 1);
                    }
                }
            }
        }
        header_line
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn parse_file(path: &Path) -> CliResult<(String, FileConfig)> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let parsed: FileConfig = toml::from_str(&text).map_err(|e| CliError::Config {
        path: Some(path.to_path_buf()),
        line: e.span().map(|s| line_of_offset(&text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    Ok((text, parsed))
}

impl RunConfig {
    /// Reads `path` (if any) and applies the flag overrides.
    pub fn load(command: &str, path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let (text, file) = match path {
            Some(p) => parse_file(p)?,
            None => (String::new(), FileConfig::default()),
        };
        let src = Source { path, text: &text };
        let bare = file.alpha.is_some() || file.beta.is_some() || file.atoms.is_some() || file.stable.is_some();
        let mut mechanism = match (file.mechanism, bare) {
            (Some(_), true) => {
                return Err(src.error(
                    None,
                    Some("alpha"),
                    "top-level mechanism keys cannot be combined with a [mechanism] section",
                ))
            }
            (Some(m), false) => Some(m),
            (None, true) => Some(MechanismSection {
                file: None,
                alpha: file.alpha.unwrap_or(0.0),
                beta: file.beta.unwrap_or(0.0),
                atoms: file.atoms.unwrap_or_default(),
                stable: file.stable,
                skip_validation: false,
            }),
            (None, false) => None,
        };
        // `[mechanism] file = …` pulls a bare mechanism file in
        if let Some(m) = mechanism.as_mut() {
            if let Some(rel) = m.file.clone() {
                let base = path.and_then(Path::parent).unwrap_or(Path::new("."));
                let target = base.join(&rel);
                if !target.exists() {
                    return Err(src.error(
                        Some("mechanism"),
                        Some("file"),
                        format!("mechanism file {} does not exist", target.display()),
                    ));
                }
                let (_, inner) = parse_file(&target)?;
                *m = MechanismSection {
                    file: Some(rel),
                    alpha: inner.alpha.unwrap_or(0.0),
                    beta: inner.beta.unwrap_or(0.0),
                    atoms: inner.atoms.unwrap_or_default(),
                    stable: inner.stable,
                    skip_validation: m.skip_validation,
                };
            }
        }
        let mut verify = file.verify.unwrap_or_default();
        if let Some(f) = &overrides.filter {
            verify.filter = Some(f.clone());
        }
        if let Some(x) = overrides.tolerance_scale {
            verify.tolerance_scale = x;
        }
        let cfg = Self {
            command: command.to_string(),
            config_path: path.map(Path::to_path_buf),
            out: overrides.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            seed: overrides.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            threads: overrides.threads.or(file.threads),
            mechanism,
            grid: file.grid.unwrap_or_default(),
            schedule: file.schedule.unwrap_or_default(),
            sim: file.sim.unwrap_or_default(),
            verify,
        };
        cfg.validate(&src)?;
        Ok(cfg)
    }

    fn validate(&self, src: &Source) -> CliResult<()> {
        if self.threads == Some(0) {
            return Err(src.error(None, Some("threads"), "threads must be positive"));
        }
        if let Some(m) = &self.mechanism {
            let sec = if src.locate(Some("mechanism"), None).is_some() { Some("mechanism") } else { None };
            if !m.alpha.is_finite() {
                return Err(src.error(sec, Some("alpha"), "alpha must be finite"));
            }
            if !(m.beta >= 0.0 && m.beta.is_finite()) {
                return Err(src.error(sec, Some("beta"), format!("beta must be finite and >= 0, got {}", m.beta)));
            }
            if m.atoms.iter().any(|[x, w]| !(*x > 0.0 && *w >= 0.0 && x.is_finite() && w.is_finite())) {
                return Err(src.error(sec, Some("atoms"), "atoms must be [location > 0, mass >= 0] pairs"));
            }
            self.build_mechanism().map_err(|e| src.error(sec, Some("alpha"), e.to_string()))?;
        }
        let g = &self.grid;
        if g.dim == 0 {
            return Err(src.error(Some("grid"), Some("dim"), "dim must be at least 1"));
        }
        if g.nodes < MIN_NODES {
            return Err(src.error(Some("grid"), Some("nodes"), format!("nodes must be at least {MIN_NODES}, got {}", g.nodes)));
        }
        if !matches!(g.policy.as_str(), "uniform" | "geometric") {
            return Err(src.error(Some("grid"), Some("policy"), "policy must be \"uniform\" or \"geometric\""));
        }
        if !matches!(g.method.as_str(), "newton" | "picard") {
            return Err(src.error(Some("grid"), Some("method"), "method must be \"newton\" or \"picard\""));
        }
        if !(g.inner_fraction > 0.0 && g.inner_fraction < 1.0) {
            return Err(src.error(Some("grid"), Some("inner_fraction"), "inner_fraction must lie in (0, 1)"));
        }
        if g.max_step.is_some_and(|h| !(h > 0.0)) {
            return Err(src.error(Some("grid"), Some("max_step"), "max_step must be positive"));
        }
        if !(g.tol > 0.0) || g.max_iter == 0 || !(g.omega > 0.0 && g.omega <= 1.0) {
            return Err(src.error(Some("grid"), None, "tol > 0, max_iter > 0 and omega in (0, 1] are required"));
        }
        let s = &self.schedule;
        let increasing = |v: &[f64], lower: f64| v.first().is_some_and(|&x| x > lower) && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&s.radii, 0.0) {
            return Err(src.error(Some("schedule"), Some("radii"), "radii must be non-empty, positive and increasing"));
        }
        if let Some(t) = &s.thetas {
            if t.is_empty() || t[0] < 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(src.error(Some("schedule"), Some("thetas"), "thetas must be non-empty, >= 0 and increasing"));
            }
        }
        if s.s.is_empty() || s.s.iter().any(|&x| !(x > 0.0)) {
            return Err(src.error(Some("schedule"), Some("s"), "s must be a non-empty list of positive radii"));
        }
        let m = &self.sim;
        if !matches!(m.mode.as_str(), "csbp" | "extinction" | "bbm") {
            return Err(src.error(Some("sim"), Some("mode"), "mode must be \"csbp\", \"extinction\" or \"bbm\""));
        }
        if m.paths == 0 {
            return Err(src.error(Some("sim"), Some("paths"), "paths must be positive"));
        }
        if !(m.dt > 0.0 && m.horizon > 0.0 && m.initial_mass > 0.0) {
            return Err(src.error(Some("sim"), None, "dt, horizon and initial_mass must be positive"));
        }
        if m.q < 0.0 || m.b < 0.0 {
            return Err(src.error(Some("sim"), Some(if m.q < 0.0 { "q" } else { "b" }), "q and b must be >= 0"));
        }
        if m.thetas.iter().any(|&t| !(t >= 0.0)) {
            return Err(src.error(Some("sim"), Some("thetas"), "thetas must be >= 0"));
        }
        if !increasing(&m.horizons, 0.0) {
            return Err(src.error(Some("sim"), Some("horizons"), "horizons must be non-empty, positive and increasing"));
        }
        if !increasing(&m.radii, 0.0) {
            return Err(src.error(Some("sim"), Some("radii"), "radii must be non-empty, positive and increasing"));
        }
        if !(0.0..=1.0).contains(&m.p2) {
            return Err(src.error(Some("sim"), Some("p2"), "p2 must lie in [0, 1]"));
        }
        if m.cap == 0 || m.dim == 0 || !(m.rate > 0.0) {
            return Err(src.error(Some("sim"), None, "cap, dim and rate must be positive"));
        }
        let v = &self.verify;
        if !(v.tolerance_scale > 0.0 && v.tolerance_scale.is_finite()) {
            return Err(src.error(Some("verify"), Some("tolerance_scale"), "tolerance scale must be positive"));
        }
        Ok(())
    }

    pub fn build_mechanism(&self) -> exitmass_core::Result<BranchingMechanism> {
        let m = self
            .mechanism
            .as_ref()
            .ok_or_else(|| exitmass_core::Error::Domain("no mechanism configured".into()))?;
        let measure = levy(&m.atoms, m.stable)?;
        if m.skip_validation {
            BranchingMechanism::new_unvalidated(m.alpha, m.beta, measure)
        } else {
            BranchingMechanism::new(m.alpha, m.beta, measure)
        }
    }

    pub fn require_mechanism(&self) -> CliResult<BranchingMechanism> {
        if self.mechanism.is_none() {
            return Err(CliError::config(format!(
                "command `{}` needs a mechanism: pass --config with a [mechanism] section or a mechanism file",
                self.command
            )));
        }
        Ok(self.build_mechanism()?)
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            nodes: self.grid.nodes,
            policy: if self.grid.policy == "geometric" { SpacingPolicy::GeometricNearZero } else { SpacingPolicy::Uniform },
            inner_fraction: self.grid.inner_fraction,
            max_step: self.grid.max_step,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.grid.tol,
            max_iter: self.grid.max_iter,
            method: if self.grid.method == "picard" { SolverMethod::Picard } else { SolverMethod::Newton },
            omega: self.grid.omega,
            theta_max: self.grid.theta_max,
        }
    }

    /// θ schedule, or the default grid on [0, 3] with λ* inserted.
    pub fn thetas(&self, lambda_star: f64) -> Vec<f64> {
        if let Some(t) = &self.schedule.thetas {
            return t.clone();
        }
        let mut t: Vec<f64> = (0..=12).map(|k| k as f64 * 0.25).collect();
        if lambda_star <= 3.0 {
            t.push(lambda_star);
        }
        t.sort_by(f64::total_cmp);
        t.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        t
    }
}

pub fn levy(atoms: &[[f64; 2]], stable: Option<StableSection>) -> exitmass_core::Result<LevyMeasure> {
    let atoms = atoms.iter().map(|&[location, mass]| Atom { location, mass }).collect();
    let stable = stable.map(|s| StableDensity::new(s.c, s.b)).transpose()?;
    LevyMeasure::new(atoms, stable)
}
