use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assemble::{BoundaryKind, DiscreteOperator};
use super::grid::GridFunction;
use super::sparse::{axpy, dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖A x − b‖₂ / ‖b‖₂` recomputed from the returned solution.
    pub residual: f64,
}

/// Solves `op.matrix · x = rhs` and returns the solution on the full grid
/// (eliminated Dirichlet nodes set to zero).
pub fn krylov_solve(op: &DiscreteOperator, rhs: &[f64], settings: SolverSettings) -> Result<(GridFunction, SolveStats)> {
    let (x, stats) = solve_unknowns(op, rhs, settings)?;
    Ok((op.expand(&x, None), stats))
}

/// Like [`krylov_solve`] but returns the raw unknown vector. Singular
/// operators (constants per component in the kernel) get a mean-zero
/// projected right-hand side and a mean-zero solution.
pub fn solve_unknowns(op: &DiscreteOperator, rhs: &[f64], settings: SolverSettings) -> Result<(Vec<f64>, SolveStats)> {
    if rhs.len() != op.unknowns() {
        return Err(Error::GridMismatch(format!("rhs has {} entries, operator {}", rhs.len(), op.unknowns())));
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("rhs must be finite"));
    }
    let m = op.components;
    if !op.singular && op.bc != BoundaryKind::Dirichlet && op.zero_order > 0.0 {
        return solve_shifted(op, rhs, settings);
    }
    let kernel = op.singular.then_some(m);
    let mut b = rhs.to_vec();
    if let Some(m) = kernel {
        remove_component_means(&mut b, m, None);
    }
    let (mut x, stats) = if op.symmetric {
        conjugate_gradient(&op.matrix, &b, kernel, settings)?
    } else {
        bicgstab(&op.matrix, &b, kernel, settings)?
    };
    if let Some(m) = kernel {
        remove_component_means(&mut x, m, Some(&op.mass));
    }
    Ok((x, stats))
}

/// `K + cM` with `K·1 = 0`: constants are exact eigenvectors with the tiny
/// eigenvalue `c`, which stalls the iteration as `c → 0`. The constant part
/// of the solution is split off exactly and the rest is solved on the
/// subspace of zero mass-weighted mean, where the conditioning is that of
/// `K` alone.
fn solve_shifted(op: &DiscreteOperator, rhs: &[f64], settings: SolverSettings) -> Result<(Vec<f64>, SolveStats)> {
    let m = op.components;
    let c = op.zero_order;
    let mut b = rhs.to_vec();
    let mut shift = vec![0.0; m];
    for (comp, s) in shift.iter_mut().enumerate() {
        let total: f64 = b.iter().skip(comp).step_by(m).sum();
        let mass: f64 = op.mass.iter().skip(comp).step_by(m).sum();
        *s = total / (c * mass);
    }
    for (k, v) in b.iter_mut().enumerate() {
        *v -= shift[k % m] * c * op.mass[k];
    }
    let subspace = Some(MeanFree { m, weights: &op.mass });
    let (mut x, stats) = if op.symmetric {
        cg(&op.matrix, &b, None, subspace, settings)?
    } else {
        bicgstab_impl(&op.matrix, &b, None, subspace, settings)?
    };
    for (k, v) in x.iter_mut().enumerate() {
        *v += shift[k % m];
    }
    let r = true_residual(&op.matrix, &x, rhs, None);
    let bnorm = norm2(rhs);
    Ok((
        x,
        SolveStats {
            iterations: stats.iterations,
            residual: if bnorm > 0.0 { r / bnorm } else { r },
        },
    ))
}

/// Restricts preconditioned directions to zero weighted mean per component.
#[derive(Clone, Copy)]
struct MeanFree<'a> {
    m: usize,
    weights: &'a [f64],
}

impl MeanFree<'_> {
    fn apply(self, v: &mut [f64]) {
        remove_component_means(v, self.m, Some(self.weights));
    }
}

/// Subtracts the per-component (weighted) mean.
pub(crate) fn remove_component_means(v: &mut [f64], m: usize, weights: Option<&[f64]>) {
    for c in 0..m {
        let (mut s, mut w) = (0.0, 0.0);
        for k in (c..v.len()).step_by(m) {
            let wk = weights.map_or(1.0, |ws| ws[k]);
            s += wk * v[k];
            w += wk;
        }
        let mean = s / w;
        for k in (c..v.len()).step_by(m) {
            v[k] -= mean;
        }
    }
}

fn true_residual(a: &CsrMatrix, x: &[f64], b: &[f64], kernel: Option<usize>) -> f64 {
    let mut r = a.matvec(x);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    if let Some(m) = kernel {
        remove_component_means(&mut r, m, None);
    }
    norm2(&r)
}

fn jacobi(a: &CsrMatrix) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .map(|d| {
            if d > 0.0 || d < 0.0 {
                Ok(1.0 / d)
            } else {
                Err(Error::Degenerate("zero on the operator diagonal".into()))
            }
        })
        .collect()
}

/// A restart must cut the true residual below this fraction of the previous
/// restart's, otherwise the solve is reported as stalled.
const STAGNATION: f64 = 0.9;

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], kernel: Option<usize>, settings: SolverSettings) -> Result<(Vec<f64>, SolveStats)> {
    cg(a, b, kernel, None, settings)
}

fn cg(a: &CsrMatrix, b: &[f64], kernel: Option<usize>, subspace: Option<MeanFree>, settings: SolverSettings) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0 }));
    }
    let dinv = jacobi(a)?;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let precond = |r: &[f64], z: &mut Vec<f64>| {
        z.clear();
        z.extend(r.iter().zip(&dinv).map(|(a, d)| a * d));
        if let Some(s) = subspace {
            s.apply(z);
        }
    };
    let mut z = Vec::with_capacity(n);
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    let mut last_restart = f64::INFINITY;
    while it < settings.max_iter {
        it += 1;
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap == 0.0 {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if let Some(m) = kernel {
            remove_component_means(&mut r, m, None);
        }
        if norm2(&r) <= settings.tol * bnorm {
            let res = true_residual(a, &x, b, kernel);
            if res <= settings.tol * bnorm {
                return Ok((x, SolveStats { iterations: it, residual: res / bnorm }));
            }
            if res >= STAGNATION * last_restart {
                // rounding floor: restarts no longer reduce the true residual
                return Err(Error::NotConverged { iterations: it, residual: res / bnorm });
            }
            last_restart = res;
            // recurrence drifted: restart from the true residual
            r = a.matvec(&x);
            r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
            if let Some(m) = kernel {
                remove_component_means(&mut r, m, None);
            }
            precond(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        z.par_iter_mut().zip(&r).zip(&dinv).for_each(|((zi, ri), di)| *zi = ri * di);
        if let Some(s) = subspace {
            s.apply(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let res = true_residual(a, &x, b, kernel) / bnorm;
    if res <= settings.tol {
        return Ok((x, SolveStats { iterations: it, residual: res }));
    }
    Err(Error::NotConverged { iterations: it, residual: res })
}

/// Right-preconditioned (Jacobi) BiCGStab.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], kernel: Option<usize>, settings: SolverSettings) -> Result<(Vec<f64>, SolveStats)> {
    bicgstab_impl(a, b, kernel, None, settings)
}

fn bicgstab_impl(
    a: &CsrMatrix,
    b: &[f64],
    kernel: Option<usize>,
    subspace: Option<MeanFree>,
    settings: SolverSettings,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0 }));
    }
    let dinv = jacobi(a)?;
    let precond = |v: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = v.par_iter().zip(&dinv).map(|(a, d)| a * d).collect();
        if let Some(s) = subspace {
            s.apply(&mut out);
        }
        out
    };
    let project = |v: &mut [f64]| {
        if let Some(m) = kernel {
            remove_component_means(v, m, None);
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut it = 0;
    let mut last_restart = f64::INFINITY;
    'outer: loop {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        while it < settings.max_iter {
            it += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            p.par_iter_mut()
                .zip(&r)
                .zip(&v)
                .for_each(|((pi, ri), vi)| *pi = ri + beta * (*pi - omega * vi));
            let y = precond(&p);
            v = a.matvec(&y);
            project(&mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 {
                break;
            }
            alpha = rho / rv;
            let mut s = r.clone();
            axpy(-alpha, &v, &mut s);
            if norm2(&s) <= settings.tol * bnorm {
                axpy(alpha, &y, &mut x);
                break;
            }
            let zs = precond(&s);
            let mut t = a.matvec(&zs);
            project(&mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                break;
            }
            omega = dot(&t, &s) / tt;
            axpy(alpha, &y, &mut x);
            axpy(omega, &zs, &mut x);
            r = s;
            axpy(-omega, &t, &mut r);
            if norm2(&r) <= settings.tol * bnorm {
                break;
            }
            if omega == 0.0 {
                break;
            }
        }
        let res = true_residual(a, &x, b, kernel);
        if res <= settings.tol * bnorm {
            return Ok((x, SolveStats { iterations: it, residual: res / bnorm }));
        }
        if it >= settings.max_iter || res >= STAGNATION * last_restart {
            return Err(Error::NotConverged { iterations: it, residual: res / bnorm });
        }
        last_restart = res;
        // restart with the true residual and a fresh shadow vector
        r = a.matvec(&x);
        r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        project(&mut r);
        continue 'outer;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::assemble::{assemble, laplacian_symbol, AssemblyOptions, BoundaryKind, Coefficient};
    use crate::discrete::grid::Grid;
    use crate::field::CoefTensor;
    use std::f64::consts::PI;

    #[test]
    fn identity_system() {
        let a = CsrMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let (x, _) = conjugate_gradient(&a, &b, None, SolverSettings::default()).unwrap();
        assert_eq!(x, b);
        let (x, _) = bicgstab(&a, &b, None, SolverSettings::default()).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn periodic_poisson_matches_symbol() {
        let grid = Grid::periodic_box(1, 1.0, 64).unwrap();
        let coef = Coefficient::Constant(CoefTensor::isotropic(1, 1, 1.0));
        let op = assemble(&coef, &grid, BoundaryKind::Periodic, AssemblyOptions::default()).unwrap();
        let f = GridFunction::from_fn(grid.clone(), 1, |x, o| o[0] = (2.0 * PI * x[0]).cos());
        let (u, stats) = krylov_solve(&op, &op.source_load(&f), SolverSettings::default()).unwrap();
        assert!(stats.residual <= 1e-10);
        let lam = laplacian_symbol(grid.h(0), 1.0);
        for (a, b) in u.values.iter().zip(&f.values) {
            assert!((a - b / lam).abs() < 1e-10 * (1.0 / lam).max(1.0));
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let grid = Grid::periodic_box(2, 1.0, 8).unwrap();
        let coef = Coefficient::Constant(CoefTensor::isotropic(2, 1, 1.0));
        let op = assemble(&coef, &grid, BoundaryKind::Periodic, AssemblyOptions::default()).unwrap();
        let (u, stats) = krylov_solve(&op, &vec![0.0; op.unknowns()], SolverSettings::default()).unwrap();
        assert!(u.values.iter().all(|v| *v == 0.0));
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn nonconvergence_reports_residual() {
        let grid = Grid::periodic_box(1, 1.0, 256).unwrap();
        let coef = Coefficient::Constant(CoefTensor::isotropic(1, 1, 1.0));
        let op = assemble(&coef, &grid, BoundaryKind::Periodic, AssemblyOptions::default()).unwrap();
        let f = GridFunction::from_fn(grid.clone(), 1, |x, o| o[0] = (2.0 * PI * x[0]).sin() + (6.0 * PI * x[0]).cos());
        let err = solve_unknowns(&op, &op.source_load(&f), SolverSettings { tol: 1e-12, max_iter: 3 }).unwrap_err();
        match err {
            Error::NotConverged { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let mut trip = Vec::new();
        let n = 50;
        for i in 0..n {
            trip.push((i, i, 4.0));
            if i + 1 < n {
                trip.push((i, i + 1, -1.5));
                trip.push((i + 1, i, -0.5));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, trip);
        let x_true: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
        let b = a.matvec(&x_true);
        let (x, stats) = bicgstab(&a, &b, None, SolverSettings::default()).unwrap();
        assert!(stats.residual <= 1e-10);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-8);
        }
    }
}
