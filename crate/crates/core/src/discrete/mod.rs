//! Uniform-grid flux-form discretization of `−div(A∇·) + c`, Krylov solvers,
//! quadrature and grid-function I/O.

pub mod assemble;
pub mod grid;
pub mod io;
pub mod krylov;
pub mod norms;
pub mod sparse;

pub use assemble::{affine_load, assemble, check_resolution, energy_form, node_fluxes, AssemblyOptions, BoundaryKind, Coefficient, DiscreteOperator};
pub use grid::{Grid, GridFunction};
pub use krylov::{krylov_solve, solve_unknowns, SolveStats, SolverSettings};
pub use norms::{ball_nodes, gradient, l2_avg_ball, lp_norm, mean};
pub use sparse::CsrMatrix;
