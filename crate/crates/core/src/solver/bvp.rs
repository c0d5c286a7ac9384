use std::fmt;
use std::sync::Arc;

use crate::discrete::{
    assemble, solve_unknowns, AssemblyOptions, BoundaryKind, Coefficient, Grid, GridFunction, SolveStats,
    SolverSettings,
};
use crate::error::{Error, Result};

/// Vector-valued data `x ↦ F(x)` with `m` components.
pub type DataFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Boundary data `(x, outward normal) ↦ g(x, n)`.
pub type FluxFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum BoundaryData {
    /// `u = f` on the boundary.
    Dirichlet(DataFn),
    /// Conormal derivative `n·A∇u = g`.
    Neumann(FluxFn),
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryData::Dirichlet(_) => f.write_str("Dirichlet(..)"),
            BoundaryData::Neumann(_) => f.write_str("Neumann(..)"),
        }
    }
}

/// `−div(A∇u) = F` on an axis-aligned rectangle.
#[derive(Clone, Debug)]
pub struct BvpSpec {
    pub coefficient: Coefficient,
    pub origin: Vec<f64>,
    pub side: Vec<f64>,
    /// Intervals per axis.
    pub n: Vec<usize>,
    pub bc: BoundaryData,
    pub source: Option<SourceFn>,
    pub solver: SolverSettings,
    pub override_resolution: bool,
}

#[derive(Clone)]
pub struct SourceFn(pub DataFn);

impl fmt::Debug for SourceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SourceFn(..)")
    }
}

impl BvpSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::rectangle(&self.origin, &self.side, &self.n)
    }
}

#[derive(Clone, Debug)]
pub struct BvpSolution {
    pub u: GridFunction,
    pub stats: SolveStats,
    /// `|Σ load| / Σ|load|` before projection (Neumann only).
    pub neumann_mismatch: Option<f64>,
}

fn sample(grid: &Grid, m: usize, f: &DataFn) -> Result<GridFunction> {
    let g = GridFunction::from_fn(grid.clone(), m, |x, out| {
        let v = f(x);
        for (o, vi) in out.iter_mut().zip(v.iter().chain(std::iter::repeat(&f64::NAN))) {
            *o = *vi;
        }
    });
    if !g.is_finite() {
        return Err(Error::invalid(format!("data must return {m} finite components")));
    }
    Ok(g)
}

/// Solves the boundary-value problem. Neumann solutions are returned with
/// zero trapezoid mean.
pub fn solve_bvp(spec: &BvpSpec) -> Result<BvpSolution> {
    let grid = spec.grid()?;
    let m = spec.coefficient.components();
    let opts = AssemblyOptions {
        zero_order: 0.0,
        override_resolution: spec.override_resolution,
    };
    let source = spec.source.as_ref().map(|s| sample(&grid, m, &s.0)).transpose()?;
    match &spec.bc {
        BoundaryData::Dirichlet(f) => {
            let boundary = sample(&grid, m, f)?;
            let (u, stats) = solve_dirichlet_values(&spec.coefficient, &grid, &boundary, source.as_ref(), spec.solver, opts)?;
            Ok(BvpSolution {
                u,
                stats,
                neumann_mismatch: None,
            })
        }
        BoundaryData::Neumann(g) => {
            let op = assemble(&spec.coefficient, &grid, BoundaryKind::Neumann, opts)?;
            let mut rhs = op.neumann_load(&|x, n| g(x, n));
            if let Some(f) = &source {
                for (r, s) in rhs.iter_mut().zip(op.source_load(f)) {
                    *r += s;
                }
            }
            let mut worst: f64 = 0.0;
            for c in 0..m {
                let total: f64 = rhs.iter().skip(c).step_by(m).sum();
                let scale: f64 = rhs.iter().skip(c).step_by(m).map(|v| v.abs()).sum();
                if scale > 0.0 {
                    worst = worst.max(total.abs() / scale);
                }
            }
            if worst > 1e-8 {
                return Err(Error::IncompatibleNeumann { relative: worst });
            }
            let (x, stats) = solve_unknowns(&op, &rhs, spec.solver)?;
            Ok(BvpSolution {
                u: op.expand(&x, None),
                stats,
                neumann_mismatch: Some(worst),
            })
        }
    }
}

/// Dirichlet solve with boundary values taken from the boundary nodes of
/// `boundary` on `grid`.
pub fn solve_dirichlet_values(
    coef: &Coefficient,
    grid: &Grid,
    boundary: &GridFunction,
    source: Option<&GridFunction>,
    solver: SolverSettings,
    opts: AssemblyOptions,
) -> Result<(GridFunction, SolveStats)> {
    let op = assemble(coef, grid, BoundaryKind::Dirichlet, opts)?;
    let mut rhs = op.dirichlet_lift(boundary);
    if let Some(f) = source {
        for (r, s) in rhs.iter_mut().zip(op.source_load(f)) {
            *r += s;
        }
    }
    let (x, stats) = solve_unknowns(&op, &rhs, solver)?;
    Ok((op.expand(&x, Some(boundary)), stats))
}
