//! Approximate correctors `χ_T` solving
//! `−div(A∇χ) + T⁻²χ = div(A∇P_j^β)` on a periodic box, and their
//! measured bounds.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete::{
    affine_load, assemble, gradient, io, mean, solve_unknowns, AssemblyOptions, BoundaryKind, Coefficient, Grid,
    GridFunction, SolverSettings,
};
use crate::error::{Error, Result};
use crate::field::TensorField;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorOptions {
    /// Box side per axis; `None` picks the default (see [`default_box`]).
    pub box_side: Option<Vec<f64>>,
    /// Intervals per axis.
    pub n: usize,
    pub solver: SolverSettings,
    pub override_resolution: bool,
}

impl CorrectorOptions {
    pub fn new(n: usize) -> Self {
        CorrectorOptions {
            box_side: None,
            n,
            solver: SolverSettings::default(),
            override_resolution: false,
        }
    }
}

/// Periodic fields use one period cell: the whole-space corrector then
/// shares the field's period, so the cell problem is exact. Otherwise the
/// box side is `max(2πT, 64·2π/min|ω|)`.
pub fn default_box(field: &TensorField, t: f64) -> Vec<f64> {
    if let Some(p) = field.period() {
        return p.to_vec();
    }
    let wmin = field.min_frequency();
    let base = if wmin.is_finite() { 64.0 * 2.0 * PI / wmin } else { 2.0 * PI };
    let t_side = if t.is_finite() { 2.0 * PI * t } else { 0.0 };
    vec![t_side.max(base); field.dim()]
}

/// Correctors `χ_{T,j}^β` for all `(j, β)`, stored at index `j·m + β`.
#[derive(Clone, Debug)]
pub struct CorrectorSet {
    /// `f64::INFINITY` marks the exact periodic cell corrector.
    pub t: f64,
    pub field: TensorField,
    /// The field with frequencies rounded onto the box lattice; this is the
    /// coefficient the correctors actually solve with.
    pub periodized: TensorField,
    pub grid: Grid,
    pub chi: Vec<GridFunction>,
    pub grad_chi: Vec<GridFunction>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub periodization_error: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    t: Option<f64>,
    box_side: Vec<f64>,
    n: Vec<usize>,
    residuals: Vec<f64>,
    periodization_error: f64,
    files: Vec<String>,
}

/// Solves the `d·m` corrector problems (in parallel).
pub fn solve_corrector(field: &TensorField, t: f64, opts: &CorrectorOptions) -> Result<CorrectorSet> {
    if !(t >= 1.0) {
        return Err(Error::invalid(format!("T must be at least 1, got {t}")));
    }
    let d = field.dim();
    let m = field.components();
    let side = match &opts.box_side {
        Some(s) if s.len() == d => s.clone(),
        Some(_) => return Err(Error::invalid("box side needs one entry per axis")),
        None => default_box(field, t),
    };
    let mut warnings = Vec::new();
    if t.is_finite() && field.period().is_none() && side.iter().any(|s| *s < 2.0 * PI * t) {
        warnings.push(format!("box side {:?} is below 2πT = {:.3}", side, 2.0 * PI * t));
    }
    let (periodized, perr) = field.periodize(&side);
    let smallest = side.iter().copied().fold(f64::INFINITY, f64::min);
    if perr > 1.0 / smallest {
        warnings.push(format!("periodization error {perr:.3e} exceeds 1/box side = {:.3e}", 1.0 / smallest));
    }
    for w in &warnings {
        warn!("{w}");
    }
    let grid = Grid::periodic_cell(&side, opts.n)?;
    let coef = Coefficient::oscillating(&periodized, 1.0);
    let zero_order = if t.is_finite() { 1.0 / (t * t) } else { 0.0 };
    let op = assemble(
        &coef,
        &grid,
        BoundaryKind::Periodic,
        AssemblyOptions {
            zero_order,
            override_resolution: opts.override_resolution,
        },
    )?;

    let columns: Vec<Result<(GridFunction, f64, usize)>> = (0..d * m)
        .into_par_iter()
        .map(|col| {
            let (j, beta) = (col / m, col % m);
            let mut g = vec![0.0; m * d];
            g[beta * d + j] = 1.0;
            let rhs: Vec<f64> = affine_load(&coef, &grid, &g).into_iter().map(|v| -v).collect();
            let (x, stats) = solve_unknowns(&op, &rhs, opts.solver)?;
            let mut chi = op.expand(&x, None);
            let mu = mean(&chi);
            for (k, v) in chi.values.iter_mut().enumerate() {
                *v -= mu[k % m];
            }
            Ok((chi, stats.residual, stats.iterations))
        })
        .collect();
    let mut chi = Vec::with_capacity(d * m);
    let mut residuals = Vec::with_capacity(d * m);
    let mut iterations = Vec::with_capacity(d * m);
    for c in columns {
        let (f, r, it) = c?;
        chi.push(f);
        residuals.push(r);
        iterations.push(it);
    }
    let grad_chi = chi.par_iter().map(gradient).collect();
    Ok(CorrectorSet {
        t,
        field: field.clone(),
        periodized,
        grid,
        chi,
        grad_chi,
        residuals,
        iterations,
        periodization_error: perr,
        warnings,
    })
}

/// The `T = ∞` corrector on one period cell.
pub fn solve_cell_corrector(field: &TensorField, n: usize, solver: SolverSettings) -> Result<CorrectorSet> {
    let period = field
        .period()
        .ok_or_else(|| Error::invalid("the exact cell problem needs a period lattice"))?
        .to_vec();
    let opts = CorrectorOptions {
        box_side: Some(period),
        n,
        solver,
        override_resolution: false,
    };
    solve_corrector(field, f64::INFINITY, &opts)
}

impl CorrectorSet {
    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn components(&self) -> usize {
        self.field.components()
    }

    pub fn column(&self, j: usize, beta: usize) -> &GridFunction {
        &self.chi[j * self.components() + beta]
    }

    pub fn coefficient(&self) -> Coefficient {
        Coefficient::oscillating(&self.periodized, 1.0)
    }

    pub fn box_volume(&self) -> f64 {
        self.grid.volume()
    }

    /// All correctors at node `p` as a flat vector over `(j, β, α)`.
    fn node_values(&self, p: usize) -> impl Iterator<Item = f64> + '_ {
        self.chi.iter().flat_map(move |c| c.node(p).iter().copied())
    }

    /// Writes one HGF1 file per `(j, β)` and a JSON manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let m = self.components();
        let mut files = Vec::new();
        for (k, c) in self.chi.iter().enumerate() {
            let name = format!("chi_j{}_b{}.hgf", k / m + 1, k % m + 1);
            io::write_hgf1(c, fs::File::create(dir.join(&name))?)?;
            files.push(name);
        }
        let manifest = Manifest {
            t: self.t.is_finite().then_some(self.t),
            box_side: self.grid.side().to_vec(),
            n: self.grid.intervals().to_vec(),
            residuals: self.residuals.clone(),
            periodization_error: self.periodization_error,
            files,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// Measured corrector quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorBounds {
    /// `T⁻¹ max_x |χ_T(x)|` (Frobenius norm over all entries).
    pub sup_over_t: f64,
    /// `max_x |∇χ_T(x)|`.
    pub lipschitz: f64,
    /// `max_{j,β} ⟨|∇χ_{T,j}^β|² + T⁻²|χ_{T,j}^β|²⟩` with edge differences.
    pub energy: f64,
    /// `μ⁻² sup_y |A(y)|²` (operator norm on `R^{m×d}`; `μ` capped at 1).
    pub energy_bound: f64,
    pub holder_ratio: f64,
    /// Largest `|⟨χ⟩| / max|χ|` over the columns.
    pub mean_defect: f64,
}

/// Sampled `sup_y |A(y)|` in the operator norm.
pub fn sampled_operator_norm(field: &TensorField, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = field.dim();
    let mut best: f64 = 0.0;
    for k in 0..samples.max(1) {
        let y: Vec<f64> = (0..d)
            .map(|a| match field.period() {
                Some(p) => rng.gen::<f64>() * p[a],
                None => rng.gen_range(-100.0..100.0),
            })
            .collect();
        let y = if k == 0 { vec![0.0; d] } else { y };
        let a = field.evaluate(&y).to_matrix();
        let s = a.singular_values();
        best = best.max(s.max());
    }
    best
}

pub fn corrector_bounds(cs: &CorrectorSet, sigma: f64, seed: u64) -> Result<CorrectorBounds> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::invalid(format!("sigma must lie in (0,1), got {sigma}")));
    }
    let grid = &cs.grid;
    let d = grid.dim();
    let nodes = grid.node_count();
    let t_inv = if cs.t.is_finite() { 1.0 / cs.t } else { 0.0 };

    let sup = (0..nodes)
        .map(|p| cs.node_values(p).map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let lipschitz = (0..nodes)
        .map(|p| cs.grad_chi.iter().map(|g| g.node(p).iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);

    let mut energy: f64 = 0.0;
    let mut mean_defect: f64 = 0.0;
    for c in &cs.chi {
        let m = c.components;
        let mut e = 0.0;
        for p in 0..nodes {
            let idx = grid.multi_index(p);
            let mut j = idx.clone();
            for axis in 0..d {
                let next = grid.step(idx[axis], axis, true).expect("periodic grid");
                j[axis] = next;
                let q = grid.flat(&j);
                j[axis] = idx[axis];
                let h = grid.h(axis);
                let w = grid.dual_volume(p);
                for a in 0..m {
                    let diff = (c.values[q * m + a] - c.values[p * m + a]) / h;
                    e += w * diff * diff;
                }
            }
            let w = grid.dual_volume(p);
            e += w * t_inv * t_inv * c.node(p).iter().map(|v| v * v).sum::<f64>();
        }
        energy = energy.max(e / grid.volume());
        let mx = c.max_abs();
        if mx > 0.0 {
            mean_defect = mean_defect.max(mean(c).iter().fold(0.0f64, |a, v| a.max(v.abs())) / mx);
        }
    }
    let a_norm = sampled_operator_norm(&cs.periodized, 2000, seed);
    let mu = cs.field.mu().min(1.0);

    let holder_ratio = if cs.t.is_finite() {
        let t_scale = cs.t.powf(1.0 - sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut best: f64 = 0.0;
        let mut idx = vec![0usize; d];
        for k in 0..10_000 {
            let p = rng.gen_range(0..nodes);
            grid.multi_index_into(p, &mut idx);
            let q_idx: Vec<usize> = if k % 2 == 0 {
                (0..d).map(|a| rng.gen_range(0..grid.nodes_on_axis(a))).collect()
            } else {
                (0..d)
                    .map(|a| {
                        let n = grid.nodes_on_axis(a) as i64;
                        let off = rng.gen_range(-8i64..=8);
                        (idx[a] as i64 + off).rem_euclid(n) as usize
                    })
                    .collect()
            };
            let q = grid.flat(&q_idx);
            if q == p {
                continue;
            }
            let dist = (0..d)
                .map(|a| {
                    let n = grid.nodes_on_axis(a) as i64;
                    let raw = (idx[a] as i64 - q_idx[a] as i64).rem_euclid(n);
                    let steps = raw.min(n - raw) as f64;
                    (steps * grid.h(a)).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            if dist == 0.0 {
                continue;
            }
            let diff = cs
                .node_values(p)
                .zip(cs.node_values(q))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.max(diff / (t_scale * dist.powf(sigma)));
        }
        best
    } else {
        0.0
    };

    Ok(CorrectorBounds {
        sup_over_t: t_inv * sup,
        lipschitz,
        energy,
        energy_bound: a_norm * a_norm / (mu * mu),
        holder_ratio,
        mean_defect,
    })
}

/// `⟨|∇χ_ref − ∇χ_T|⟩`, the mean pointwise Frobenius distance of the
/// corrector gradients.
pub fn psi_distance(cs: &CorrectorSet, reference: &CorrectorSet) -> Result<f64> {
    if !cs.grid.same_shape(&reference.grid) || cs.chi.len() != reference.chi.len() {
        return Err(Error::GridMismatch("corrector sets live on different grids".into()));
    }
    let identical = reference.t == cs.t && cs.grad_chi.iter().zip(&reference.grad_chi).all(|(a, b)| a.values == b.values);
    if identical {
        return Ok(0.0);
    }
    if !(reference.t >= 4.0 * cs.t) {
        return Err(Error::invalid(format!(
            "reference T = {} must be at least 4T = {}",
            reference.t,
            4.0 * cs.t
        )));
    }
    let grid = &cs.grid;
    let mut s = 0.0;
    for p in 0..grid.node_count() {
        let d2: f64 = cs
            .grad_chi
            .iter()
            .zip(&reference.grad_chi)
            .map(|(a, b)| a.node(p).iter().zip(b.node(p)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum();
        s += grid.dual_volume(p) * d2.sqrt();
    }
    Ok(s / grid.volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CoefTensor;

    fn sin1d() -> TensorField {
        TensorField::scalar(1, 2.0, &[(vec![1.0], 0.0, 1.0)], 1.0, Some(vec![2.0 * PI])).unwrap()
    }

    #[test]
    fn constant_field_has_zero_corrector() {
        let f = TensorField::constant(CoefTensor::isotropic(2, 2, 1.5), 1.0).unwrap();
        let cs = solve_corrector(&f, 4.0, &CorrectorOptions::new(16)).unwrap();
        assert!(cs.chi.iter().all(|c| c.max_abs() <= 1e-10));
        let b = corrector_bounds(&cs, 0.5, 1).unwrap();
        assert!(b.sup_over_t <= 1e-10 && b.lipschitz <= 1e-10 && b.energy <= 1e-20 && b.holder_ratio <= 1e-10);
    }

    #[test]
    fn one_dimensional_gradient_profile() {
        let cs = solve_corrector(&sin1d(), 1000.0, &CorrectorOptions::new(4096)).unwrap();
        let g = &cs.grad_chi[0];
        let p = 1024; // y = π/2
        let expect = 3f64.sqrt() / 3.0 - 1.0;
        assert!((g.values[p] - expect).abs() < 1e-3, "{}", g.values[p]);
        let b = corrector_bounds(&cs, 0.5, 3).unwrap();
        assert!(b.energy <= b.energy_bound);
        assert!(b.mean_defect <= 1e-12);
    }

    #[test]
    fn psi_distance_basics() {
        let f = sin1d();
        let a = solve_corrector(&f, 8.0, &CorrectorOptions::new(256)).unwrap();
        assert_eq!(psi_distance(&a, &a).unwrap(), 0.0);
        let cell = solve_cell_corrector(&f, 256, SolverSettings::default()).unwrap();
        let d8 = psi_distance(&a, &cell).unwrap();
        let b = solve_corrector(&f, 32.0, &CorrectorOptions::new(256)).unwrap();
        let d32 = psi_distance(&b, &cell).unwrap();
        assert!(psi_distance(&a, &b).is_ok() && psi_distance(&b, &a).is_err());
        assert!(d8 > 0.0 && d32 < d8);
        let other = solve_corrector(&f, 8.0, &CorrectorOptions::new(128)).unwrap();
        assert!(matches!(psi_distance(&a, &other), Err(Error::GridMismatch(_))));
    }
}
