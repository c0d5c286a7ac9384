//! Boundary-value solves on rectangles and the empirical rate and
//! regularity harnesses built on them.

pub mod bvp;
pub mod probes;
pub mod rate;

pub use bvp::{solve_bvp, solve_dirichlet_values, BoundaryData, BvpSolution, BvpSpec, DataFn, FluxFn, SourceFn};
pub use probes::{boundary_lipschitz_probe, lipschitz_probe, w1p_probe, BoundaryPatch, ProbeReport, ProbeRow, ProbeSetup};
pub use rate::{rate_sweep, RateMode, RateReport, RateRow, RateSetup};
