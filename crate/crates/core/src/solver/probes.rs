use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvp::{solve_bvp, BoundaryData, BvpSpec, SourceFn};
use crate::discrete::{ball_nodes, gradient, Coefficient, Grid, GridFunction, SolverSettings};
use crate::error::{Error, Result};
use crate::field::TensorField;

/// Hölder exponent used for source and boundary-data terms.
pub const PROBE_BETA: f64 = 0.5;

/// The domain and data every probe solves with.
#[derive(Clone, Debug)]
pub struct ProbeSetup {
    pub origin: Vec<f64>,
    pub side: Vec<f64>,
    pub n: Vec<usize>,
    pub bc: BoundaryData,
    pub source: Option<SourceFn>,
    pub solver: SolverSettings,
    pub override_resolution: bool,
}

impl ProbeSetup {
    fn grid(&self) -> Result<Grid> {
        Grid::rectangle(&self.origin, &self.side, &self.n)
    }

    fn solve(&self, field: &TensorField, epsilon: f64) -> Result<GridFunction> {
        let spec = BvpSpec {
            coefficient: Coefficient::oscillating(field, epsilon),
            origin: self.origin.clone(),
            side: self.side.clone(),
            n: self.n.clone(),
            bc: self.bc.clone(),
            source: self.source.clone(),
            solver: self.solver,
            override_resolution: self.override_resolution,
        };
        Ok(solve_bvp(&spec)?.u)
    }

    fn solve_all(&self, field: &TensorField, epsilons: &[f64]) -> Result<Vec<GridFunction>> {
        epsilons.par_iter().map(|e| self.solve(field, *e)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub epsilon: f64,
    pub ratio: f64,
    pub numerator: f64,
    pub denominator: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// `max ratio / min ratio` over the sweep.
    pub max_ratio: f64,
}

impl ProbeReport {
    fn new(rows: Vec<ProbeRow>) -> Self {
        let hi = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let lo = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        ProbeReport {
            max_ratio: if lo > 0.0 { hi / lo } else { f64::NAN },
            rows,
        }
    }
}

fn pointwise_norm(f: &GridFunction, p: usize) -> f64 {
    f.node(p).iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_interior(grid: &Grid, center: &[f64], radius: f64) -> Result<()> {
    for k in 0..grid.dim() {
        let margin = 4.0 * grid.h(k);
        let (lo, hi) = (grid.origin()[k] + margin, grid.origin()[k] + grid.side()[k] - margin);
        if center[k] - radius < lo - 1e-12 || center[k] + radius > hi + 1e-12 {
            return Err(Error::OutsideGrid(format!(
                "ball of radius {radius} at {center:?} is closer than 4h to the boundary along axis {k}"
            )));
        }
    }
    Ok(())
}

/// `r^β sup_t t^{1−β} ⨍_{B(x,t)} |F|` over dyadic `t ∈ (0, r]` down to `2h`.
fn source_term(source: Option<&SourceFn>, grid: &Grid, center: &[f64], r: f64) -> Result<f64> {
    let Some(src) = source else { return Ok(0.0) };
    let mut t = r;
    let mut best: f64 = 0.0;
    while t >= 2.0 * grid.h_max() {
        let nodes = ball_nodes(grid, center, t)?;
        let avg = nodes
            .iter()
            .map(|&p| (src.0)(&grid.point(p)).iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / nodes.len() as f64;
        best = best.max(r.powf(PROBE_BETA) * t.powf(1.0 - PROBE_BETA) * avg);
        t /= 2.0;
    }
    Ok(best)
}

/// Interior Lipschitz ratio
/// `‖∇u_ε‖_{L∞(B)} / [(1/r)(⨍_{2B}|u_ε|²)^{1/2} + source term]`.
pub fn lipschitz_probe(field: &TensorField, epsilons: &[f64], setup: &ProbeSetup, center: &[f64], r: f64) -> Result<ProbeReport> {
    let grid = setup.grid()?;
    check_interior(&grid, center, 2.0 * r)?;
    let inner = ball_nodes(&grid, center, r)?;
    let outer = ball_nodes(&grid, center, 2.0 * r)?;
    let src = source_term(setup.source.as_ref(), &grid, center, r)?;
    let sols = setup.solve_all(field, epsilons)?;
    let rows = epsilons
        .iter()
        .zip(sols)
        .map(|(e, u)| {
            let g = gradient(&u);
            let num = inner.iter().map(|&p| pointwise_norm(&g, p)).fold(0.0, f64::max);
            let avg = (outer.iter().map(|&p| pointwise_norm(&u, p).powi(2)).sum::<f64>() / outer.len() as f64).sqrt();
            let den = avg / r + src;
            ProbeRow {
                epsilon: *e,
                ratio: num / den,
                numerator: num,
                denominator: den,
            }
        })
        .collect();
    Ok(ProbeReport::new(rows))
}

/// Reverse-Hölder ratio `(⨍_B |∇u_ε|^p)^{1/p} / (⨍_{2B} |∇u_ε|²)^{1/2}`.
pub fn w1p_probe(field: &TensorField, epsilons: &[f64], p: f64, setup: &ProbeSetup, center: &[f64], r: f64) -> Result<ProbeReport> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::invalid(format!("p must be a finite value >= 2, got {p}")));
    }
    let grid = setup.grid()?;
    check_interior(&grid, center, 2.0 * r)?;
    let inner = ball_nodes(&grid, center, r)?;
    let outer = ball_nodes(&grid, center, 2.0 * r)?;
    let sols = setup.solve_all(field, epsilons)?;
    let rows = epsilons
        .iter()
        .zip(sols)
        .map(|(e, u)| {
            let g = gradient(&u);
            let num = (inner.iter().map(|&q| pointwise_norm(&g, q).powf(p)).sum::<f64>() / inner.len() as f64).powf(1.0 / p);
            let den = (outer.iter().map(|&q| pointwise_norm(&g, q).powi(2)).sum::<f64>() / outer.len() as f64).sqrt();
            ProbeRow {
                epsilon: *e,
                ratio: num / den,
                numerator: num,
                denominator: den,
            }
        })
        .collect();
    Ok(ProbeReport::new(rows))
}

/// A flat boundary piece: the face `x_axis = origin_axis` (lower) or
/// `origin + side` (upper), centered at `center` (its `axis` entry is ignored).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPatch {
    pub axis: usize,
    pub upper: bool,
    pub center: Vec<f64>,
    pub r: f64,
    /// Height of `D_r` in units of `r`, `10(K₀ + 1)` with `K₀ = 0` by default.
    pub height_factor: f64,
}

impl BoundaryPatch {
    pub fn lower(axis: usize, center: Vec<f64>, r: f64) -> Self {
        BoundaryPatch {
            axis,
            upper: false,
            center,
            r,
            height_factor: 10.0,
        }
    }

    fn face_coord(&self, grid: &Grid) -> f64 {
        grid.origin()[self.axis] + if self.upper { grid.side()[self.axis] } else { 0.0 }
    }

    fn tangential_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .enumerate()
            .filter(|(k, _)| *k != self.axis)
            .map(|(_, (a, b))| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Nodes of `D_s = {|x' − c'| < s, 0 ≤ dist to face < height·s}`.
    fn region(&self, grid: &Grid, s: f64) -> Result<Vec<usize>> {
        let face = self.face_coord(grid);
        let height = self.height_factor * s;
        for k in 0..grid.dim() {
            let (lo, hi) = (grid.origin()[k], grid.origin()[k] + grid.side()[k]);
            if k == self.axis {
                if height > grid.side()[k] + 1e-12 {
                    return Err(Error::OutsideGrid(format!("D_{s} is taller than the domain")));
                }
            } else if self.center[k] - s < lo - 1e-12 || self.center[k] + s > hi + 1e-12 {
                return Err(Error::OutsideGrid(format!("Δ_{s} leaves the boundary face along axis {k}")));
            }
        }
        let nodes: Vec<usize> = (0..grid.node_count())
            .filter(|&p| {
                let x = grid.point(p);
                let dist = (x[self.axis] - face).abs();
                self.tangential_distance(&x) < s && dist < height
            })
            .collect();
        if nodes.len() < 2 {
            return Err(Error::OutsideGrid(format!("D_{s} contains fewer than 2 nodes")));
        }
        Ok(nodes)
    }

    /// Boundary nodes of `Δ_s`.
    fn face_nodes(&self, grid: &Grid, s: f64) -> Vec<usize> {
        let face = self.face_coord(grid);
        (0..grid.node_count())
            .filter(|&p| {
                let x = grid.point(p);
                (x[self.axis] - face).abs() < 1e-12 && self.tangential_distance(&x) < s
            })
            .collect()
    }
}

/// `sup |v|` and the Hölder seminorm `sup |v(a) − v(b)| / |a − b|^β` of a
/// vector quantity sampled on boundary nodes.
fn sup_and_seminorm(points: &[Vec<f64>], values: &[Vec<f64>]) -> (f64, f64) {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sup = values.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let mut semi: f64 = 0.0;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            let dist = norm(&points[a].iter().zip(&points[b]).map(|(x, y)| x - y).collect::<Vec<_>>());
            let diff = norm(&values[a].iter().zip(&values[b]).map(|(x, y)| x - y).collect::<Vec<_>>());
            semi = semi.max(diff / dist.powf(PROBE_BETA));
        }
    }
    (sup, semi)
}

/// Boundary Lipschitz ratio `‖∇u_ε‖_{L∞(D_r)} / surrogate`.
///
/// Dirichlet surrogate: `(1/r)(⨍_{D_2r}|u|²)^{1/2} + r‖f‖_∞ + ‖∇_tan f‖_∞ +
/// r^β[∇_tan f]_β`. Neumann surrogate: `(⨍_{D_2r}|∇u|²)^{1/2} + ‖g‖_∞ +
/// r^β[g]_β`. Norms of the data are taken over `Δ_2r`.
pub fn boundary_lipschitz_probe(field: &TensorField, epsilons: &[f64], setup: &ProbeSetup, patch: &BoundaryPatch) -> Result<ProbeReport> {
    let grid = setup.grid()?;
    let d = grid.dim();
    if patch.axis >= d || patch.center.len() != d || !(patch.r > 0.0) {
        return Err(Error::invalid("boundary patch needs a valid axis, center and radius"));
    }
    let r = patch.r;
    let inner = patch.region(&grid, r)?;
    let outer = patch.region(&grid, 2.0 * r)?;
    let face = patch.face_nodes(&grid, 2.0 * r);
    let points: Vec<Vec<f64>> = face.iter().map(|&p| grid.point(p)).collect();
    let mut normal = vec![0.0; d];
    normal[patch.axis] = if patch.upper { 1.0 } else { -1.0 };
    let data_terms = match &setup.bc {
        BoundaryData::Dirichlet(f) => {
            let f_sup = points.iter().map(|x| f(x).iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
            let tangential: Vec<Vec<f64>> = points
                .iter()
                .map(|x| {
                    let mut out = Vec::new();
                    for k in (0..d).filter(|k| *k != patch.axis) {
                        let h = grid.h(k);
                        let (mut a, mut b) = (x.clone(), x.clone());
                        a[k] += h;
                        b[k] -= h;
                        let (fa, fb) = (f(&a), f(&b));
                        out.extend(fa.iter().zip(&fb).map(|(p, q)| (p - q) / (2.0 * h)));
                    }
                    out
                })
                .collect();
            let (g_sup, g_semi) = sup_and_seminorm(&points, &tangential);
            r * f_sup + g_sup + r.powf(PROBE_BETA) * g_semi
        }
        BoundaryData::Neumann(g) => {
            let values: Vec<Vec<f64>> = points.iter().map(|x| g(x, &normal)).collect();
            let (sup, semi) = sup_and_seminorm(&points, &values);
            sup + r.powf(PROBE_BETA) * semi
        }
    };
    let sols = setup.solve_all(field, epsilons)?;
    let rows = epsilons
        .iter()
        .zip(sols)
        .map(|(e, u)| {
            let g = gradient(&u);
            let num = inner.iter().map(|&p| pointwise_norm(&g, p)).fold(0.0, f64::max);
            let energy_term = match &setup.bc {
                BoundaryData::Dirichlet(_) => {
                    (outer.iter().map(|&p| pointwise_norm(&u, p).powi(2)).sum::<f64>() / outer.len() as f64).sqrt() / r
                }
                BoundaryData::Neumann(_) => {
                    (outer.iter().map(|&p| pointwise_norm(&g, p).powi(2)).sum::<f64>() / outer.len() as f64).sqrt()
                }
            };
            let den = energy_term + data_terms;
            ProbeRow {
                epsilon: *e,
                ratio: num / den,
                numerator: num,
                denominator: den,
            }
        })
        .collect();
    Ok(ProbeReport::new(rows))
}
