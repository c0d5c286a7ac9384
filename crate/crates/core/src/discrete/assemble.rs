use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{Grid, GridFunction};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::field::{CoefTensor, TensorField};

/// The coefficient of a discretized operator: either an oscillating field
/// sampled as `A(x/ε)` or a constant tensor.
#[derive(Clone, Debug)]
pub enum Coefficient {
    Oscillating { field: TensorField, epsilon: f64 },
    Constant(CoefTensor),
}

impl Coefficient {
    pub fn oscillating(field: &TensorField, epsilon: f64) -> Self {
        Coefficient::Oscillating {
            field: field.clone(),
            epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Coefficient::Oscillating { field, .. } => field.dim(),
            Coefficient::Constant(t) => t.dim(),
        }
    }

    pub fn components(&self) -> usize {
        match self {
            Coefficient::Oscillating { field, .. } => field.components(),
            Coefficient::Constant(t) => t.components(),
        }
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], y: &mut [f64], out: &mut [f64]) {
        match self {
            Coefficient::Oscillating { field, epsilon } => {
                for (yk, xk) in y.iter_mut().zip(x) {
                    *yk = xk / epsilon;
                }
                field.evaluate_into(y, out);
            }
            Coefficient::Constant(t) => out.copy_from_slice(t.as_slice()),
        }
    }

    /// Smallest wavelength of the sampled coefficient, `ε·2π/max|ω|`.
    pub fn wavelength(&self) -> Option<f64> {
        match self {
            Coefficient::Oscillating { field, epsilon } => field.oscillation_scale().map(|s| s * epsilon),
            Coefficient::Constant(_) => None,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            Coefficient::Oscillating { field, .. } => field.is_symmetric(),
            Coefficient::Constant(t) => t.is_symmetric(),
        }
    }

    /// Whether `a_ij` or `a_ji` is nonzero somewhere (i ≠ j).
    fn couples(&self, i: usize, j: usize) -> bool {
        let m = self.components();
        let touches = |t: &CoefTensor| {
            (0..m).any(|a| (0..m).any(|b| t.get(i, j, a, b) != 0.0 || t.get(j, i, a, b) != 0.0))
        };
        match self {
            Coefficient::Oscillating { field, .. } => {
                touches(field.mean()) || field.modes().iter().any(|md| touches(&md.cos) || touches(&md.sin))
            }
            Coefficient::Constant(t) => touches(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub zero_order: f64,
    pub override_resolution: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            zero_order: 0.0,
            override_resolution: false,
        }
    }
}

/// Checks `h_max ≤ wavelength / 8`.
pub fn check_resolution(coef: &Coefficient, grid: &Grid) -> Result<()> {
    if let Some(w) = coef.wavelength() {
        let limit = w / 8.0;
        if grid.h_max() > limit * (1.0 + 1e-12) {
            return Err(Error::UnderResolved { h: grid.h_max(), limit });
        }
    }
    Ok(())
}

/// Assembled flux-form operator `−div(A∇·) + c` restricted to the unknown
/// nodes.
///
/// `matrix` is the symmetric-when-`A = A*` weak form `K + c·M` where `M` is
/// the diagonal of dual-cell volumes; the pointwise (strong) operator is
/// `matrix·u / M`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub components: usize,
    pub bc: BoundaryKind,
    pub zero_order: f64,
    pub matrix: CsrMatrix,
    pub mass: Vec<f64>,
    pub symmetric: bool,
    pub singular: bool,
    unknown_of_node: Vec<Option<usize>>,
    node_of_unknown: Vec<usize>,
    /// Coupling of unknowns to eliminated Dirichlet nodes (columns: node·m+β).
    boundary_coupling: CsrMatrix,
}

/// Local stencil of one element: corner nodes, a weight, the coefficient at
/// the element center, and per-corner difference weights along the one or
/// two axes the element spans.
struct Element {
    corners: [usize; 4],
    count: usize,
    axes: (usize, usize),
    weight: f64,
    /// g[axis slot][corner]
    g: [[f64; 4]; 2],
}

fn for_each_element(
    coef: &Coefficient,
    grid: &Grid,
    mut visit: impl FnMut(&Element, &[f64]),
    node_range: std::ops::Range<usize>,
) {
    let d = grid.dim();
    let m = coef.components();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .filter(|(i, j)| coef.couples(*i, *j))
        .collect();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut a = vec![0.0; d * d * m * m];
    for p in node_range {
        grid.multi_index_into(p, &mut idx);
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = grid.coord(k, idx[k]);
        }
        for i in 0..d {
            let Some(ni) = grid.step(idx[i], i, true) else { continue };
            let hi = grid.h(i);
            let mut w = 1.0 / hi;
            for k in 0..d {
                if k != i {
                    w *= grid.axis_weight(k, idx[k]);
                }
            }
            let saved = idx[i];
            idx[i] = ni;
            let q = grid.flat(&idx);
            idx[i] = saved;
            x[i] += 0.5 * hi;
            coef.eval_into(&x, &mut y, &mut a);
            x[i] -= 0.5 * hi;
            let el = Element {
                corners: [p, q, 0, 0],
                count: 2,
                axes: (i, i),
                weight: w * hi * hi,
                g: [[-1.0 / hi, 1.0 / hi, 0.0, 0.0], [0.0; 4]],
            };
            visit(&el, &a);
        }
        for &(i, j) in &pairs {
            let (Some(ni), Some(nj)) = (grid.step(idx[i], i, true), grid.step(idx[j], j, true)) else {
                continue;
            };
            let (hi, hj) = (grid.h(i), grid.h(j));
            let mut w = hi * hj;
            for k in 0..d {
                if k != i && k != j {
                    w *= grid.axis_weight(k, idx[k]);
                }
            }
            let (si, sj) = (idx[i], idx[j]);
            idx[i] = ni;
            let qi = grid.flat(&idx);
            idx[j] = nj;
            let qij = grid.flat(&idx);
            idx[i] = si;
            let qj = grid.flat(&idx);
            idx[j] = sj;
            x[i] += 0.5 * hi;
            x[j] += 0.5 * hj;
            coef.eval_into(&x, &mut y, &mut a);
            x[i] -= 0.5 * hi;
            x[j] -= 0.5 * hj;
            let (ci, cj) = (0.5 / hi, 0.5 / hj);
            let el = Element {
                corners: [p, qi, qj, qij],
                count: 4,
                axes: (i, j),
                weight: w,
                g: [[-ci, ci, -ci, ci], [-cj, -cj, cj, cj]],
            };
            visit(&el, &a);
        }
    }
}

/// Contribution of one element to `B(v, u) = Σ W a_kl^{αβ} D_k v^α D_l u^β`
/// as local (row corner, row comp, col corner, col comp, value) entries.
fn element_entries(el: &Element, a: &[f64], d: usize, m: usize, mut push: impl FnMut(usize, usize, f64)) {
    let (i, j) = el.axes;
    for ca in 0..el.count {
        for cb in 0..el.count {
            for al in 0..m {
                for be in 0..m {
                    let v = if i == j {
                        a[CoefTensor::index(d, m, i, i, al, be)] * el.g[0][ca] * el.g[0][cb]
                    } else {
                        a[CoefTensor::index(d, m, i, j, al, be)] * el.g[0][ca] * el.g[1][cb]
                            + a[CoefTensor::index(d, m, j, i, al, be)] * el.g[1][ca] * el.g[0][cb]
                    };
                    if v != 0.0 {
                        push(el.corners[ca] * m + al, el.corners[cb] * m + be, el.weight * v);
                    }
                }
            }
        }
    }
}

const BLOCK: usize = 2048;

/// Assembles the discrete operator on `grid`. Periodic grids require
/// `BoundaryKind::Periodic`; Dirichlet and Neumann require a closed box.
pub fn assemble(coef: &Coefficient, grid: &Grid, bc: BoundaryKind, opts: AssemblyOptions) -> Result<DiscreteOperator> {
    let d = grid.dim();
    let m = coef.components();
    if coef.dim() != d {
        return Err(Error::GridMismatch(format!("coefficient dimension {} on a {d}-D grid", coef.dim())));
    }
    match bc {
        BoundaryKind::Periodic if !grid.all_periodic() => {
            return Err(Error::invalid("periodic assembly needs a periodic grid"))
        }
        BoundaryKind::Dirichlet | BoundaryKind::Neumann if !grid.none_periodic() => {
            return Err(Error::invalid("Dirichlet/Neumann assembly needs a non-periodic grid"))
        }
        _ => {}
    }
    if !(opts.zero_order >= 0.0) {
        return Err(Error::invalid("zero-order coefficient must be nonnegative"));
    }
    if !opts.override_resolution {
        check_resolution(coef, grid)?;
    }

    let nodes = grid.node_count();
    let mut unknown_of_node = vec![None; nodes];
    let mut node_of_unknown = Vec::with_capacity(nodes);
    for p in 0..nodes {
        if bc == BoundaryKind::Dirichlet && grid.is_boundary_node(p) {
            continue;
        }
        unknown_of_node[p] = Some(node_of_unknown.len());
        node_of_unknown.push(p);
    }
    let dof = |p: usize| unknown_of_node[p];

    let blocks: Vec<(Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>)> = (0..nodes.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut main = Vec::new();
            let mut couple = Vec::new();
            let range = b * BLOCK..((b + 1) * BLOCK).min(nodes);
            for_each_element(
                coef,
                grid,
                |el, a| {
                    element_entries(el, a, d, m, |r, c, v| {
                        let Some(ur) = dof(r / m) else { return };
                        match dof(c / m) {
                            Some(uc) => main.push((ur * m + r % m, uc * m + c % m, v)),
                            None => couple.push((ur * m + r % m, c, v)),
                        }
                    })
                },
                range,
            );
            (main, couple)
        })
        .collect();
    let mut main = Vec::new();
    let mut couple = Vec::new();
    for (a, b) in blocks {
        main.extend(a);
        couple.extend(b);
    }

    let unknowns = node_of_unknown.len() * m;
    let mass: Vec<f64> = node_of_unknown
        .iter()
        .flat_map(|&p| std::iter::repeat(grid.dual_volume(p)).take(m))
        .collect();
    if opts.zero_order > 0.0 {
        for (k, w) in mass.iter().enumerate() {
            main.push((k, k, opts.zero_order * w));
        }
    }
    let matrix = CsrMatrix::from_triplets(unknowns, unknowns, main);
    let boundary_coupling = CsrMatrix::from_triplets(unknowns, nodes * m, couple);
    Ok(DiscreteOperator {
        grid: grid.clone(),
        components: m,
        bc,
        zero_order: opts.zero_order,
        matrix,
        mass,
        symmetric: coef.is_symmetric(),
        singular: bc != BoundaryKind::Dirichlet && opts.zero_order == 0.0,
        unknown_of_node,
        node_of_unknown,
        boundary_coupling,
    })
}

/// Load vector `r` with `r·v = B(P, v)` for the affine map `P(x) = G x`,
/// `G[β·d + j] = ∂_j P^β`, over all node dofs. On a periodic grid this is
/// the weak form of `−div(A∇P)`.
pub fn affine_load(coef: &Coefficient, grid: &Grid, gradient: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let m = coef.components();
    let nodes = grid.node_count();
    let blocks: Vec<Vec<f64>> = (0..nodes.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut r = vec![0.0; nodes * m];
            let range = b * BLOCK..((b + 1) * BLOCK).min(nodes);
            for_each_element(
                coef,
                grid,
                |el, a| {
                    let (i, j) = el.axes;
                    for ca in 0..el.count {
                        for al in 0..m {
                            let mut s = 0.0;
                            for be in 0..m {
                                if i == j {
                                    s += a[CoefTensor::index(d, m, i, i, al, be)] * el.g[0][ca] * gradient[be * d + i];
                                } else {
                                    s += a[CoefTensor::index(d, m, i, j, al, be)] * el.g[0][ca] * gradient[be * d + j]
                                        + a[CoefTensor::index(d, m, j, i, al, be)] * el.g[1][ca] * gradient[be * d + i];
                                }
                            }
                            r[el.corners[ca] * m + al] += el.weight * s;
                        }
                    }
                },
                range,
            );
            r
        })
        .collect();
    let mut out = vec![0.0; nodes * m];
    for r in blocks {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out
}

/// Evaluates the discrete energy `B(v, u)` element by element, with `u`
/// optionally offset by an affine map of gradient `G` (same layout as in
/// [`affine_load`]).
pub fn energy_form(coef: &Coefficient, grid: &Grid, v: &[f64], u: &[f64], affine: Option<&[f64]>) -> f64 {
    let d = grid.dim();
    let m = coef.components();
    let nodes = grid.node_count();
    let partial: Vec<f64> = (0..nodes.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut s = 0.0;
            let range = b * BLOCK..((b + 1) * BLOCK).min(nodes);
            for_each_element(
                coef,
                grid,
                |el, a| {
                    let (i, j) = el.axes;
                    let diff = |f: &[f64], slot: usize, c: usize| -> f64 {
                        (0..el.count).map(|k| el.g[slot][k] * f[el.corners[k] * m + c]).sum()
                    };
                    let shift = |c: usize, axis: usize| affine.map_or(0.0, |g| g[c * d + axis]);
                    for al in 0..m {
                        for be in 0..m {
                            if i == j {
                                s += el.weight
                                    * a[CoefTensor::index(d, m, i, i, al, be)]
                                    * diff(v, 0, al)
                                    * (diff(u, 0, be) + shift(be, i));
                            } else {
                                s += el.weight
                                    * (a[CoefTensor::index(d, m, i, j, al, be)] * diff(v, 0, al) * (diff(u, 1, be) + shift(be, j))
                                        + a[CoefTensor::index(d, m, j, i, al, be)] * diff(v, 1, al) * (diff(u, 0, be) + shift(be, i)));
                            }
                        }
                    }
                },
                range,
            );
            s
        })
        .collect();
    partial.iter().sum()
}

/// Pointwise flux `A(∇u + G)` at the nodes, component `α·d + k`.
///
/// Each element's flux is spread equally over its corners and normalized by
/// the nodes' dual volumes, so the trapezoid mean of the result equals the
/// element-wise mean flux exactly.
pub fn node_fluxes(coef: &Coefficient, grid: &Grid, u: Option<&[f64]>, gradient: &[f64]) -> GridFunction {
    let d = grid.dim();
    let m = coef.components();
    let nodes = grid.node_count();
    let md = m * d;
    let blocks: Vec<Vec<f64>> = (0..nodes.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; nodes * md];
            let range = b * BLOCK..((b + 1) * BLOCK).min(nodes);
            for_each_element(
                coef,
                grid,
                |el, a| {
                    let (i, j) = el.axes;
                    let diff = |slot: usize, c: usize, axis: usize| -> f64 {
                        let du = u.map_or(0.0, |f| (0..el.count).map(|k| el.g[slot][k] * f[el.corners[k] * m + c]).sum());
                        du + gradient[c * d + axis]
                    };
                    let share = el.weight / el.count as f64;
                    for al in 0..m {
                        let (mut fi, mut fj) = (0.0, 0.0);
                        for ga in 0..m {
                            if i == j {
                                fi += a[CoefTensor::index(d, m, i, i, al, ga)] * diff(0, ga, i);
                            } else {
                                fi += a[CoefTensor::index(d, m, i, j, al, ga)] * diff(1, ga, j);
                                fj += a[CoefTensor::index(d, m, j, i, al, ga)] * diff(0, ga, i);
                            }
                        }
                        for k in 0..el.count {
                            let p = el.corners[k];
                            acc[p * md + al * d + i] += share * fi;
                            if i != j {
                                acc[p * md + al * d + j] += share * fj;
                            }
                        }
                    }
                },
                range,
            );
            acc
        })
        .collect();
    let mut values = vec![0.0; nodes * md];
    for r in blocks {
        for (o, v) in values.iter_mut().zip(r) {
            *o += v;
        }
    }
    for p in 0..nodes {
        let w = grid.dual_volume(p);
        values[p * md..(p + 1) * md].iter_mut().for_each(|v| *v /= w);
    }
    GridFunction {
        grid: grid.clone(),
        components: md,
        values,
    }
}

impl DiscreteOperator {
    pub fn unknowns(&self) -> usize {
        self.node_of_unknown.len() * self.components
    }

    pub fn unknown_nodes(&self) -> &[usize] {
        &self.node_of_unknown
    }

    pub fn unknown_of(&self, node: usize) -> Option<usize> {
        self.unknown_of_node[node]
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.matvec(u)
    }

    /// Pointwise operator `(K + cM)u / M`.
    pub fn apply_strong(&self, u: &[f64]) -> Vec<f64> {
        self.apply(u).iter().zip(&self.mass).map(|(a, w)| a / w).collect()
    }

    /// Pointwise operator on the unknown nodes of a full grid function,
    /// including the coupling to Dirichlet nodes.
    pub fn apply_full(&self, u: &GridFunction) -> Vec<f64> {
        let inner = self.restrict(u);
        let mut out = self.apply(&inner);
        let b = self.boundary_coupling.matvec(&u.values);
        for ((o, x), w) in out.iter_mut().zip(b).zip(&self.mass) {
            *o = (*o + x) / w;
        }
        out
    }

    /// Weak load `M f` of pointwise source values given on every node.
    pub fn source_load(&self, f: &GridFunction) -> Vec<f64> {
        let m = self.components;
        let mut out = vec![0.0; self.unknowns()];
        for (k, &p) in self.node_of_unknown.iter().enumerate() {
            for a in 0..m {
                out[k * m + a] = self.mass[k * m + a] * f.values[p * m + a];
            }
        }
        out
    }

    /// `−K_IB u_B` for Dirichlet values carried on the boundary nodes of `u`.
    pub fn dirichlet_lift(&self, u: &GridFunction) -> Vec<f64> {
        self.boundary_coupling.matvec(&u.values).into_iter().map(|v| -v).collect()
    }

    /// Boundary integral `∫ g(x, n)·v` with the trapezoid rule on each face.
    pub fn neumann_load(&self, g: &dyn Fn(&[f64], &[f64]) -> Vec<f64>) -> Vec<f64> {
        let grid = &self.grid;
        let d = grid.dim();
        let m = self.components;
        let mut out = vec![0.0; self.unknowns()];
        let mut normal = vec![0.0; d];
        for (k, &p) in self.node_of_unknown.iter().enumerate() {
            let idx = grid.multi_index(p);
            if !(0..d).any(|a| grid.on_boundary(a, idx[a])) {
                continue;
            }
            let x = grid.point(p);
            for axis in 0..d {
                if !grid.on_boundary(axis, idx[axis]) {
                    continue;
                }
                let area: f64 = (0..d).filter(|l| *l != axis).map(|l| grid.axis_weight(l, idx[l])).product();
                normal.iter_mut().for_each(|v| *v = 0.0);
                normal[axis] = if idx[axis] == 0 { -1.0 } else { 1.0 };
                let val = g(&x, &normal);
                for a in 0..m {
                    out[k * m + a] += val[a] * area;
                }
            }
        }
        out
    }

    pub fn restrict(&self, u: &GridFunction) -> Vec<f64> {
        let m = self.components;
        self.node_of_unknown
            .iter()
            .flat_map(|&p| u.values[p * m..(p + 1) * m].iter().copied())
            .collect()
    }

    /// Embeds unknowns into a full grid function; eliminated nodes take
    /// their values from `boundary` (zero when absent).
    pub fn expand(&self, x: &[f64], boundary: Option<&GridFunction>) -> GridFunction {
        let m = self.components;
        let mut out = match boundary {
            Some(b) => b.clone(),
            None => GridFunction::zeros(self.grid.clone(), m),
        };
        for (k, &p) in self.node_of_unknown.iter().enumerate() {
            out.values[p * m..(p + 1) * m].copy_from_slice(&x[k * m..(k + 1) * m]);
        }
        out
    }
}

/// Discrete symbol `(4/h²) sin²(πh/L)` of the 3-point Laplacian on the mode
/// `cos(2πx/L)`.
pub fn laplacian_symbol(h: f64, period: f64) -> f64 {
    4.0 / (h * h) * (PI * h / period).sin().powi(2)
}
