//! Numerics for the total mass of super-Brownian motion as it exits an
//! increasing family of balls.
//!
//! The crate is organised bottom-up:
//!
//! * [`mechanism`]: branching mechanisms ψ, the root λ*, the limiting
//!   mechanism Ψ∞, and [`conditions`] for Grey's and Sheu's integral tests;
//! * [`solver`]: the radial fixed-point equation for the exit Laplace
//!   functional `u(r, s, θ)`;
//! * [`flow`]: the radius-dependent mechanism `Ψ(r, θ) = ∂u/∂r|_{r=s}` and
//!   its convergence to Ψ∞;
//! * [`sim`]: seeded Monte-Carlo for continuous-state branching processes and
//!   branching Brownian motion exit counts;
//! * [`verify`]: the end-to-end verification battery.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod error;
pub mod flow;
pub mod mechanism;
pub mod ode;
pub mod quadrature;
pub mod sim;
pub mod solver;
pub mod verify;

pub use conditions::{grey_condition, sheu_condition, ConditionVerdict, IntegralEstimate, TailClass};
pub use error::{Error, Result};
pub use flow::{build_curve, extract_psi, solve_u_infinity, MechanismCurve};

pub use mechanism::{root_lambda_star, Atom, BranchingMechanism, Criticality, LevyMeasure, StableDensity};
pub use solver::{du_dr, solve_u, solve_u_on, GridSpec, LaplaceGrid, RadialGrid, SolverOptions};

/// Version string embedded in every emitted record.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
