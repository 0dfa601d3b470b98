//! Numerical decision procedures for Grey's and Sheu's conditions.
//!
//! Both conditions ask whether an improper integral `∫^∞ g(λ) dλ` converges.
//! The integral is accumulated over dyadic blocks `[λ0·2^k, λ0·2^(k+1)]` with
//! adaptive quadrature, and the verdict comes from the local decay exponent
//! `e = −d log g / d log λ` at the far end of the last block:
//!
//! * `e > 1 + margin` converges, and a power-law tail `g(Λ)·Λ/(e − 1)` is
//!   added to the partial sum;
//! * `e ≤ 1 + boundary_tol` diverges (this includes the logarithmic case
//!   `e = 1`, e.g. linear mechanisms);
//! * anything in between, or an exponent that is still drifting across the
//!   last blocks, is reported as inconclusive together with the trace.
//!
//! For Sheu's condition `g = (∫_{λ*}^λ ψ)^{−1/2}`, so the rule reads
//! "growth exponent of `∫ψ` above 2 by a margin of 0.05".

use std::cell::Cell;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Result};
use crate::mechanism::BranchingMechanism;
use crate::quadrature::{integrate, QuadratureOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailClass {
    Converges,
    Diverges,
    Inconclusive,
}

/// A finite value, or the `+inf` marker for divergent integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegralEstimate {
    Finite(f64),
    Infinite,
}

impl IntegralEstimate {
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(v) => v,
            Self::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Self::Finite(_))
    }
}

impl fmt::Display for IntegralEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v}"),
            Self::Infinite => f.write_str("+inf"),
        }
    }
}

impl Serialize for IntegralEstimate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(v) => s.serialize_f64(*v),
            Self::Infinite => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for IntegralEstimate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Self::Finite(v)),
            Raw::Text(t) if t == "+inf" => Ok(Self::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected marker {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub holds: bool,
    pub class: TailClass,
    pub integral_estimate: IntegralEstimate,
    pub truncation_upper_limit: f64,
    pub error_bound: f64,
    pub tail_exponent: f64,
    pub diagnostics: String,
    /// Cumulative integral after each dyadic block.
    pub partial_sums: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTestOptions {
    /// Number of dyadic blocks; the truncation limit is `λ0·2^blocks`.
    pub blocks: u32,
    /// Margin on the integrand decay exponent above 1 required for convergence.
    pub margin: f64,
    /// Exponents within this distance of 1 are classified as divergent.
    pub boundary_tol: f64,
    /// Blocks back from the end at which the exponent is re-measured to detect drift.
    pub drift_window: u32,
    pub quadrature: QuadratureOptions,
}

impl Default for TailTestOptions {
    fn default() -> Self {
        Self {
            blocks: 48,
            margin: 0.025,
            boundary_tol: 5e-4,
            drift_window: 10,
            quadrature: QuadratureOptions { abs_tol: 0.0, rel_tol: 1e-10, max_subintervals: 400 },
        }
    }
}

/// Local decay exponent −d log g / d log λ by a central difference in log λ.
fn decay_exponent<G: Fn(f64) -> f64>(g: &G, lambda: f64) -> f64 {
    let h: f64 = 0.05;
    let up = g(lambda * h.exp()).ln();
    let down = g(lambda * (-h).exp()).ln();
    -(up - down) / (2.0 * h)
}

/// Classifies `∫_{start}^∞ g` with the expanding-interval + tail-exponent test.
pub fn analyse_tail<G: Fn(f64) -> f64>(
    g: G,
    start: f64,
    opts: &TailTestOptions,
) -> Result<ConditionVerdict> {
    if !(start.is_finite() && start > 0.0) {
        return domain(format!("tail test needs a positive finite start, got {start}"));
    }
    let mut partial_sums = Vec::with_capacity(opts.blocks as usize);
    let mut sum = 0.0;
    let mut quad_err = 0.0;
    let mut lo = start;
    for _ in 0..opts.blocks {
        let hi = 2.0 * lo;
        let q = integrate(&g, lo, hi, opts.quadrature)?;
        sum += q.value;
        quad_err += q.error;
        partial_sums.push(sum);
        lo = hi;
    }
    let limit = lo;
    let exponent = decay_exponent(&g, limit);
    let earlier = decay_exponent(&g, limit / 2f64.powi(opts.drift_window as i32));
    let drift = (exponent - earlier).abs();

    let (class, estimate, error_bound, diagnostics) = if !exponent.is_finite() {
        (
            TailClass::Inconclusive,
            IntegralEstimate::Finite(sum),
            quad_err,
            format!("tail exponent not finite at {limit:e}"),
        )
    } else if drift > opts.margin {
        (
            TailClass::Inconclusive,
            IntegralEstimate::Finite(sum),
            quad_err,
            format!(
                "tail exponent still drifting: {earlier:.6} -> {exponent:.6} over the last {} blocks",
                opts.drift_window
            ),
        )
    } else if exponent > 1.0 + opts.margin {
        let tail = g(limit) * limit / (exponent - 1.0);
        (
            TailClass::Converges,
            IntegralEstimate::Finite(sum + tail),
            quad_err + tail.abs(),
            format!("decay exponent {exponent:.6} > 1 + {}; tail estimate {tail:e}", opts.margin),
        )
    } else if exponent <= 1.0 + opts.boundary_tol {
        (
            TailClass::Diverges,
            IntegralEstimate::Infinite,
            quad_err,
            format!("decay exponent {exponent:.6} <= 1; partial sum {sum:e} at {limit:e}"),
        )
    } else {
        (
            TailClass::Inconclusive,
            IntegralEstimate::Finite(sum),
            quad_err,
            format!(
                "decay exponent {exponent:.6} within the margin band (1, 1 + {}]",
                opts.margin
            ),
        )
    };
    Ok(ConditionVerdict {
        holds: class == TailClass::Converges,
        class,
        integral_estimate: estimate,
        truncation_upper_limit: limit,
        error_bound,
        tail_exponent: exponent,
        diagnostics,
        partial_sums,
    })
}

/// Sheu's compact-support condition `∫^∞ (∫_{λ*}^λ ψ)^{−1/2} dλ < ∞`,
/// integrated from `λ* + 1`.
pub fn sheu_condition(mech: &BranchingMechanism) -> Result<ConditionVerdict> {
    sheu_condition_with(mech, &TailTestOptions::default())
}

pub fn sheu_condition_with(
    mech: &BranchingMechanism,
    opts: &TailTestOptions,
) -> Result<ConditionVerdict> {
    let start = mech.lambda_star() + 1.0;
    if mech.psi_antiderivative(start)? <= 0.0 {
        return domain("integral of psi vanishes above the root; is psi identically zero?");
    }
    analyse_tail(
        |l| 1.0 / mech.psi_antiderivative(l).unwrap_or(f64::NAN).sqrt(),
        start,
        opts,
    )
}

/// Grey's condition `∫_{θ0}^∞ dθ / f(θ) < ∞` for any positive, increasing `f`
/// (a [`BranchingMechanism`] via `|t| mech.psi(t)`, or Ψ∞ via
/// `|t| mech.psi_infinity(t).unwrap()`).
pub fn grey_condition<F: Fn(f64) -> f64>(f: F, theta0: f64) -> Result<ConditionVerdict> {
    grey_condition_with(f, theta0, &TailTestOptions::default())
}

pub fn grey_condition_with<F: Fn(f64) -> f64>(
    f: F,
    theta0: f64,
    opts: &TailTestOptions,
) -> Result<ConditionVerdict> {
    let bad = Cell::new(None);
    let verdict = analyse_tail(
        |t| {
            let v = f(t);
            if !(v > 0.0) && bad.get().is_none() {
                bad.set(Some((t, v)));
            }
            1.0 / v
        },
        theta0,
        opts,
    );
    if let Some((t, v)) = bad.get() {
        return domain(format!("mechanism is not positive on the integration range: f({t}) = {v}"));
    }
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::LevyMeasure;

    #[test]
    fn grey_inverse_square() {
        let v = grey_condition(|t| t * t, 1.0).unwrap();
        assert!(v.holds);
        assert!((v.integral_estimate.value() - 1.0).abs() < 1e-9, "{v:?}");
        assert!(v.error_bound >= 0.0);
    }

    #[test]
    fn grey_harmonic_diverges() {
        let v = grey_condition(|t| t, 1.0).unwrap();
        assert_eq!(v.class, TailClass::Diverges);
        assert!(!v.holds);
        assert_eq!(v.integral_estimate, IntegralEstimate::Infinite);
    }

    #[test]
    fn grey_rejects_non_positive() {
        assert!(grey_condition(|t| t - 3.0, 1.0).is_err());
    }

    #[test]
    fn borderline_exponent_is_inconclusive() {
        // decay exponent 1.01: converges mathematically but inside the margin band
        let v = grey_condition(|t: f64| t.powf(1.01), 1.0).unwrap();
        assert_eq!(v.class, TailClass::Inconclusive);
        assert!(!v.holds);
        assert!(!v.partial_sums.is_empty());
    }

    #[test]
    fn sheu_battery() {
        let quad = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        assert!(sheu_condition(&quad).unwrap().holds);
        let lin = BranchingMechanism::quadratic(-1.0, 0.0).unwrap();
        assert_eq!(sheu_condition(&lin).unwrap().class, TailClass::Diverges);
        let stable =
            BranchingMechanism::new(0.0, 0.0, LevyMeasure::stable(1.0, 0.5).unwrap()).unwrap();
        let v = sheu_condition(&stable).unwrap();
        assert!(v.holds);
        // ∫ψ ∝ λ^{2.5}, integrand decays like λ^{−1.25}
        assert!((v.tail_exponent - 1.25).abs() < 1e-6);
    }

    #[test]
    fn verdict_json_marks_infinity() {
        let v = grey_condition(|t| t, 1.0).unwrap();
        let json = serde_json::to_value(&v).unwrap();
        assert_eq!(json["integral_estimate"], "+inf");
        let back: ConditionVerdict = serde_json::from_value(json).unwrap();
        assert_eq!(back.integral_estimate, IntegralEstimate::Infinite);
    }
}
