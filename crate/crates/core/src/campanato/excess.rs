use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discrete::{ball_nodes, GridFunction};
use crate::error::{Error, Result};

/// Best affine fit of `u` on a ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineExcess {
    /// `(1/r) · (node mean of |u − Mx − q|²)^{1/2}` at the minimizer.
    pub excess: f64,
    /// Row-major `m × d`.
    pub slope: Vec<f64>,
    pub offset: Vec<f64>,
    pub components: usize,
    pub nodes: usize,
}

impl AffineExcess {
    pub fn slope_norm(&self) -> f64 {
        self.slope.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Least-squares affine fit on explicit node indices. Coordinates are
/// centered at `center` before the Gram solve.
pub(crate) fn affine_fit(u: &GridFunction, nodes: &[usize], center: &[f64], r: f64) -> Result<AffineExcess> {
    let grid = &u.grid;
    let d = grid.dim();
    let m = u.components;
    if nodes.len() < d + 2 {
        return Err(Error::Degenerate(format!(
            "affine fit needs at least {} nodes, ball holds {}",
            d + 2,
            nodes.len()
        )));
    }
    let mut gram = DMatrix::<f64>::zeros(d + 1, d + 1);
    let mut moments = DMatrix::<f64>::zeros(d + 1, m);
    let mut basis = vec![1.0; d + 1];
    let mut x = vec![0.0; d];
    for &p in nodes {
        grid.point_into(p, &mut x);
        for k in 0..d {
            basis[k + 1] = x[k] - center[k];
        }
        let values = u.node(p);
        for a in 0..=d {
            for b in 0..=d {
                gram[(a, b)] += basis[a] * basis[b];
            }
            for c in 0..m {
                moments[(a, c)] += basis[a] * values[c];
            }
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Degenerate("node set does not span an affine basis".into()))?;
    let coef = chol.solve(&moments);
    let mut slope = vec![0.0; m * d];
    let mut offset = vec![0.0; m];
    for c in 0..m {
        let mut q = coef[(0, c)];
        for k in 0..d {
            slope[c * d + k] = coef[(k + 1, c)];
            q -= coef[(k + 1, c)] * center[k];
        }
        offset[c] = q;
    }
    let mut sum = 0.0;
    for &p in nodes {
        grid.point_into(p, &mut x);
        let values = u.node(p);
        for c in 0..m {
            let mut fit = coef[(0, c)];
            for k in 0..d {
                fit += coef[(k + 1, c)] * (x[k] - center[k]);
            }
            sum += (values[c] - fit).powi(2);
        }
    }
    Ok(AffineExcess {
        excess: (sum / nodes.len() as f64).sqrt() / r,
        slope,
        offset,
        components: m,
        nodes: nodes.len(),
    })
}

/// `min_{M,q}` of the node mean of `|u − Mx − q|²` over `B(center, r)`,
/// solved exactly through the normal equations.
pub fn affine_excess(u: &GridFunction, center: &[f64], r: f64) -> Result<AffineExcess> {
    let nodes = ball_nodes(&u.grid, center, r)?;
    affine_fit(u, &nodes, center, r)
}

/// `(1/r) inf_q (⨍_{B_r} |u − q|²)^{1/2}`: the best constant fit.
pub fn constant_excess(u: &GridFunction, center: &[f64], r: f64) -> Result<f64> {
    let nodes = ball_nodes(&u.grid, center, r)?;
    Ok(deviation(u, &nodes) / r)
}

/// `(node mean of |u − ū|²)^{1/2}` with `ū` the node mean.
pub(crate) fn deviation(u: &GridFunction, nodes: &[usize]) -> f64 {
    let m = u.components;
    let mut mean = DVector::<f64>::zeros(m);
    for &p in nodes {
        for (c, v) in u.node(p).iter().enumerate() {
            mean[c] += v;
        }
    }
    mean /= nodes.len() as f64;
    let sum: f64 = nodes
        .iter()
        .map(|&p| u.node(p).iter().enumerate().map(|(c, v)| (v - mean[c]).powi(2)).sum::<f64>())
        .sum();
    (sum / nodes.len() as f64).sqrt()
}

/// Objective value of the fit `(slope, offset)` on `B(center, r)`, unnormalized.
pub fn affine_objective(u: &GridFunction, center: &[f64], r: f64, slope: &[f64], offset: &[f64]) -> Result<f64> {
    let nodes = ball_nodes(&u.grid, center, r)?;
    let d = u.grid.dim();
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    for &p in &nodes {
        u.grid.point_into(p, &mut x);
        for (c, v) in u.node(p).iter().enumerate() {
            let fit: f64 = offset[c] + (0..d).map(|k| slope[c * d + k] * x[k]).sum::<f64>();
            sum += (v - fit).powi(2);
        }
    }
    Ok(sum / nodes.len() as f64)
}
