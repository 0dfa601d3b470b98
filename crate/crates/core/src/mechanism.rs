//! Branching mechanisms ψ(λ) = −αλ + βλ² + ∫(e^{−λx} − 1 + λx) Π(dx), their
//! root λ*, signed antiderivative, and the limiting mechanism Ψ∞.

use serde::{Deserialize, Serialize};
use libm::tgamma as gamma;

use crate::error::{domain, Error, Result};

/// Below this value of λx the atom terms switch to a Taylor expansion.
const SERIES_CUTOFF: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// The density `intensity · x^(−2−index)` on (0, ∞), with `index ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableDensity {
    pub intensity: f64,
    pub index: f64,
}

impl StableDensity {
    pub fn new(intensity: f64, index: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity > 0.0) {
            return Err(Error::InvalidMechanism(format!(
                "stable intensity must be positive, got {intensity}"
            )));
        }
        if !(index > 0.0 && index < 1.0) {
            return Err(Error::InvalidMechanism(format!(
                "stable index must lie in (0, 1), got {index}"
            )));
        }
        Ok(Self { intensity, index })
    }

    /// c·Γ(−1−b), the constant in ∫(e^{−λx}−1+λx) c x^{−2−b} dx = c·Γ(−1−b)·λ^{1+b}.
    fn scale(&self) -> f64 {
        self.intensity * gamma(-1.0 - self.index)
    }

    /// Λ([x, ∞)).
    pub fn tail_mass(&self, x: f64) -> f64 {
        self.intensity * x.powf(-1.0 - self.index) / (1.0 + self.index)
    }

    /// ∫_x^∞ y Λ(dy).
    pub fn tail_first_moment(&self, x: f64) -> f64 {
        self.intensity * x.powf(-self.index) / self.index
    }

    /// ∫_0^x y² Λ(dy).
    pub fn head_second_moment(&self, x: f64) -> f64 {
        self.intensity * x.powf(1.0 - self.index) / (1.0 - self.index)
    }
}

/// A Lévy measure made of finitely many atoms plus at most one stable density.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasure {
    atoms: Vec<Atom>,
    stable: Option<StableDensity>,
}

impl LevyMeasure {
    pub fn new(atoms: Vec<Atom>, stable: Option<StableDensity>) -> Result<Self> {
        for a in &atoms {
            if !(a.location.is_finite() && a.location > 0.0) {
                return Err(Error::InvalidMechanism(format!(
                    "atom location must be positive, got {}",
                    a.location
                )));
            }
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(Error::InvalidMechanism(format!(
                    "atom mass must be positive, got {}",
                    a.mass
                )));
            }
        }
        if let Some(s) = stable {
            StableDensity::new(s.intensity, s.index)?;
        }
        Ok(Self { atoms, stable })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atom(location: f64, mass: f64) -> Result<Self> {
        Self::new(vec![Atom { location, mass }], None)
    }

    pub fn stable(intensity: f64, index: f64) -> Result<Self> {
        Ok(Self { atoms: Vec::new(), stable: Some(StableDensity::new(intensity, index)?) })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn stable_component(&self) -> Option<&StableDensity> {
        self.stable.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty() && self.stable.is_none()
    }

    /// ∫(e^{−λx} − 1 + λx) Π(dx).
    pub fn laplace_exponent(&self, lambda: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|a| a.mass * compensated_exp(lambda * a.location))
            .sum();
        let stable = self
            .stable
            .map_or(0.0, |s| s.scale() * lambda.powf(1.0 + s.index));
        atoms + stable
    }

    /// d/dλ of [`Self::laplace_exponent`].
    pub fn laplace_exponent_derivative(&self, lambda: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|a| a.mass * a.location * -(-lambda * a.location).exp_m1())
            .sum();
        let stable = self
            .stable
            .map_or(0.0, |s| s.scale() * (1.0 + s.index) * lambda.powf(s.index));
        atoms + stable
    }

    /// ∫_0^λ of [`Self::laplace_exponent`].
    pub fn laplace_exponent_integral(&self, lambda: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|a| a.mass * integrated_compensated_exp(lambda * a.location) / a.location)
            .sum();
        let stable = self
            .stable
            .map_or(0.0, |s| s.scale() * lambda.powf(2.0 + s.index) / (2.0 + s.index));
        atoms + stable
    }

    /// Σ m·x over the atoms; the linear growth rate of the atomic part at ∞.
    pub fn atomic_first_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass * a.location).sum()
    }
}

/// e^{−y} − 1 + y without cancellation for small y.
fn compensated_exp(y: f64) -> f64 {
    if y.abs() < SERIES_CUTOFF {
        y * y * (0.5 - y / 6.0 + y * y / 24.0)
    } else {
        (-y).exp_m1() + y
    }
}

/// ∫_0^y (e^{−t} − 1 + t) dt.
fn integrated_compensated_exp(y: f64) -> f64 {
    if y.abs() < SERIES_CUTOFF {
        y * y * y * (1.0 / 6.0 - y / 24.0 + y * y / 120.0)
    } else {
        -(-y).exp_m1() - y + 0.5 * y * y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

/// Bracket cap and absolute tolerance for the root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    pub cap: f64,
    pub tol: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { cap: 1e6, tol: 1e-12 }
    }
}

/// A validated branching mechanism with its root cached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchingMechanism {
    alpha: f64,
    beta: f64,
    levy: LevyMeasure,
    lambda_star: f64,
    criticality: Criticality,
}

impl BranchingMechanism {
    pub fn new(alpha: f64, beta: f64, levy: LevyMeasure) -> Result<Self> {
        Self::with_root_options(alpha, beta, levy, RootOptions::default())
    }

    pub fn with_root_options(
        alpha: f64,
        beta: f64,
        levy: LevyMeasure,
        opts: RootOptions,
    ) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidMechanism(format!("alpha must be finite, got {alpha}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidMechanism(format!("beta must be >= 0, got {beta}")));
        }
        let diverges = beta > 0.0
            || levy.stable.is_some()
            || (!levy.atoms.is_empty() && levy.atomic_first_moment() > alpha)
            || (levy.is_empty() && alpha < 0.0);
        if !diverges {
            return Err(Error::InvalidMechanism(
                "psi does not diverge to +infinity (need beta > 0, a stable component, \
                 sum of atom moments m*x above alpha, or alpha < 0)"
                    .into(),
            ));
        }
        Self::build(alpha, beta, levy, opts)
    }

    /// Skips the ψ(∞) = ∞ check. Meant for degenerate test doubles such as ψ ≡ 0.
    pub fn new_unvalidated(alpha: f64, beta: f64, levy: LevyMeasure) -> Result<Self> {
        Self::build(alpha, beta, levy, RootOptions::default())
    }

    fn build(alpha: f64, beta: f64, levy: LevyMeasure, opts: RootOptions) -> Result<Self> {
        let criticality = if alpha > 0.0 {
            Criticality::Supercritical
        } else if alpha == 0.0 {
            Criticality::Critical
        } else {
            Criticality::Subcritical
        };
        let mut mech = Self { alpha, beta, levy, lambda_star: 0.0, criticality };
        mech.lambda_star = root_lambda_star_with(&mech, opts)?;
        Ok(mech)
    }

    /// ψ(λ) = −αλ + βλ².
    pub fn quadratic(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, LevyMeasure::zero())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn levy(&self) -> &LevyMeasure {
        &self.levy
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    pub fn criticality(&self) -> Criticality {
        self.criticality
    }

    /// ψ(λ) without domain checks; callers guarantee λ ≥ 0.
    #[inline]
    pub fn psi(&self, lambda: f64) -> f64 {
        -self.alpha * lambda + self.beta * lambda * lambda + self.levy.laplace_exponent(lambda)
    }

    #[inline]
    pub fn psi_prime(&self, lambda: f64) -> f64 {
        -self.alpha + 2.0 * self.beta * lambda + self.levy.laplace_exponent_derivative(lambda)
    }

    /// ∫_0^λ ψ.
    fn psi_integral_from_zero(&self, lambda: f64) -> f64 {
        -0.5 * self.alpha * lambda * lambda
            + self.beta * lambda * lambda * lambda / 3.0
            + self.levy.laplace_exponent_integral(lambda)
    }

    pub fn eval_psi(&self, lambda: f64) -> Result<f64> {
        check_argument("lambda", lambda)?;
        Ok(self.psi(lambda))
    }

    /// |∫_{λ*}^θ ψ(λ) dλ|; non-negative on both sides of the root.
    pub fn psi_antiderivative(&self, theta: f64) -> Result<f64> {
        check_argument("theta", theta)?;
        Ok(self.antiderivative_unchecked(theta))
    }

    fn antiderivative_unchecked(&self, theta: f64) -> f64 {
        let v = self.psi_integral_from_zero(theta) - self.psi_integral_from_zero(self.lambda_star);
        v.abs()
    }

    /// Ψ∞(θ) = sign(θ − λ*) · 2 · √|∫_{λ*}^θ ψ|.
    pub fn psi_infinity(&self, theta: f64) -> Result<f64> {
        check_argument("theta", theta)?;
        Ok(self.psi_infinity_unchecked(theta))
    }

    #[inline]
    pub(crate) fn psi_infinity_unchecked(&self, theta: f64) -> f64 {
        if theta == self.lambda_star {
            return 0.0;
        }
        let magnitude = 2.0 * self.antiderivative_unchecked(theta).sqrt();
        if theta > self.lambda_star {
            magnitude
        } else {
            -magnitude
        }
    }

    /// Short human-readable description of the Lévy part.
    pub fn levy_summary(&self) -> String {
        let mut parts: Vec<String> = self
            .levy
            .atoms
            .iter()
            .map(|a| format!("atom(x={}, m={})", a.location, a.mass))
            .collect();
        if let Some(s) = self.levy.stable {
            parts.push(format!("stable(c={}, b={})", s.intensity, s.index));
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(" + ")
        }
    }
}

fn check_argument(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return domain(format!("{name} must be finite and >= 0, got {v}"));
    }
    Ok(())
}

/// λ* = inf{λ ≥ 0 : ψ(λ) > 0} with the default cap and tolerance.
pub fn root_lambda_star(mech: &BranchingMechanism) -> Result<f64> {
    root_lambda_star_with(mech, RootOptions::default())
}

pub fn root_lambda_star_with(mech: &BranchingMechanism, opts: RootOptions) -> Result<f64> {
    // ψ'(0+) = −α; (sub)critical mechanisms are non-negative on [0, ∞).
    if mech.alpha <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while mech.psi(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > opts.cap {
            return Err(Error::RootSearchOverflow { cap: opts.cap });
        }
    }
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mech.psi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Pick whichever bracket end sits closer to the zero.
    Ok(if mech.psi(hi).abs() < mech.psi(lo).abs() { hi } else { lo })
}
