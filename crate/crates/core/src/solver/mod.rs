//! Radial solver for the exit Laplace functional `u(r, s, θ)`.

mod banded;
pub mod grid;
pub mod laplace;

pub use grid::{GridSpec, RadialGrid, SpacingPolicy, MIN_NODES};
pub use laplace::{
    composition_defect, du_dr, solve_u, solve_u_on, LaplaceGrid, SolverMethod, SolverOptions,
};
