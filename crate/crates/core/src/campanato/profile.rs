use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::excess::{affine_fit, deviation, AffineExcess};
use crate::discrete::{ball_nodes, AssemblyOptions, Coefficient, Grid, GridFunction, SolverSettings};
use crate::error::{Error, Result};
use crate::homogenize::EffectiveTensor;
use crate::solver::solve_dirichlet_values;

/// Default scale ratio of the flatness iteration.
pub const DEFAULT_THETA: f64 = 0.125;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessScale {
    pub j: usize,
    pub r: f64,
    /// Normalized affine excess `F_j`.
    pub excess: f64,
    /// Row-major `m × d` minimizer `M_j`.
    pub slope: Vec<f64>,
    /// `p_j = |M_j|` (Frobenius).
    pub slope_norm: f64,
    /// `F_j / F_{j−1}`; absent at `j = 0` or when `F_{j−1} = 0`.
    pub contraction: Option<f64>,
    /// `(1/r_j) inf_q (⨍_{B_{r_j}} |u − q|²)^{1/2}`.
    pub constant_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessProfile {
    pub theta: f64,
    pub epsilon: f64,
    pub k: f64,
    pub center: Vec<f64>,
    pub scales: Vec<ExcessScale>,
    /// Scales dropped because their ball held fewer than `d + 2` nodes.
    pub truncated: usize,
    pub warnings: Vec<String>,
}

impl ExcessProfile {
    pub fn max_contraction(&self) -> Option<f64> {
        self.scales.iter().filter_map(|s| s.contraction).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,r,F,p,contraction\n");
        for s in &self.scales {
            let c = s.contraction.map(|c| format!("{c:.17e}")).unwrap_or_default();
            out.push_str(&format!("{},{:.17e},{:.17e},{:.17e},{}\n", s.j, s.r, s.excess, s.slope_norm, c));
        }
        out
    }
}

/// Scales `r_j = θ^{j+1}` for `0 ≤ j ≤ ℓ` with `θ^{ℓ+2} < ε ≤ θ^{ℓ+1}`.
pub fn profile_scales(epsilon: f64, theta: f64) -> Result<Vec<f64>> {
    if !(theta > 0.0 && theta < 0.25) {
        return Err(Error::invalid(format!("theta must lie in (0, 1/4), got {theta}")));
    }
    if !(epsilon > 0.0 && epsilon < theta) {
        return Err(Error::invalid(format!("epsilon must lie in (0, theta), got {epsilon}")));
    }
    let mut scales = vec![theta];
    while scales.last().unwrap() * theta >= epsilon * (1.0 - 1e-12) {
        scales.push(scales.last().unwrap() * theta);
    }
    Ok(scales)
}

/// Affine excess of `u` on the balls `B(center, θ^{j+1})` down to scale `ε`.
pub fn flatness_profile(u: &GridFunction, center: &[f64], epsilon: f64, theta: f64, k: f64) -> Result<ExcessProfile> {
    let radii = profile_scales(epsilon, theta)?;
    let fits: Vec<Result<(AffineExcess, f64)>> = radii
        .par_iter()
        .map(|&r| {
            let nodes = ball_nodes(&u.grid, center, r)?;
            let fit = affine_fit(u, &nodes, center, r)?;
            Ok((fit, deviation(u, &nodes) / r))
        })
        .collect();
    let mut scales: Vec<ExcessScale> = Vec::new();
    let mut warnings = Vec::new();
    let mut truncated = 0;
    for (j, (r, fit)) in radii.iter().zip(fits).enumerate() {
        match fit {
            Ok((fit, flat)) => {
                let contraction = scales.last().and_then(|prev| (prev.excess > 0.0).then(|| fit.excess / prev.excess));
                scales.push(ExcessScale {
                    j,
                    r: *r,
                    excess: fit.excess,
                    slope_norm: fit.slope_norm(),
                    slope: fit.slope,
                    contraction,
                    constant_excess: flat,
                });
            }
            Err(Error::Degenerate(msg)) => {
                truncated = radii.len() - j;
                warnings.push(format!("profile truncated at r = {r:.4e}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ExcessProfile {
        theta,
        epsilon,
        k,
        center: center.to_vec(),
        scales,
        truncated,
        warnings,
    })
}

/// `(t, (1/t) inf_q (⨍_{B_t}|u − q|²)^{1/2})` on the given radii.
pub fn constant_excess_curve(u: &GridFunction, center: &[f64], radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    radii
        .par_iter()
        .map(|&t| {
            let nodes = ball_nodes(&u.grid, center, t)?;
            Ok((t, deviation(u, &nodes) / t))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub r: f64,
    pub theta: f64,
    /// `(⨍_{B_r}|u − w|²)^{1/2} / inf_q (⨍_{B_2r}|u − q|²)^{1/2}`.
    pub approx_error: f64,
    /// Affine excess of `w` at `θr` over that at `r`.
    pub contraction: f64,
    pub iterations: usize,
}

/// Replaces `u` on the node box around `B(center, r)` by the homogenized
/// solution `w` with the same boundary values and measures how well `w`
/// tracks `u` and how fast `w` flattens.
pub fn improvement_step_audit(
    u: &GridFunction,
    center: &[f64],
    r: f64,
    theta: f64,
    effective: &EffectiveTensor,
    solver: SolverSettings,
) -> Result<StepAudit> {
    if !(theta > 0.0 && theta < 0.25) {
        return Err(Error::invalid(format!("theta must lie in (0, 1/4), got {theta}")));
    }
    let grid = &u.grid;
    let d = grid.dim();
    let outer = ball_nodes(grid, center, 2.0 * r)?;
    let mut lo = vec![0usize; d];
    let mut counts = vec![0usize; d];
    let mut origin = vec![0.0; d];
    let mut side = vec![0.0; d];
    for k in 0..d {
        let h = grid.h(k);
        let a = ((center[k] - r - grid.origin()[k]) / h + 1e-9).floor() as usize;
        let b = ((center[k] + r - grid.origin()[k]) / h - 1e-9).ceil() as usize;
        lo[k] = a;
        counts[k] = b - a;
        origin[k] = grid.coord(k, a);
        side[k] = (b - a) as f64 * h;
    }
    let sub = Grid::rectangle(&origin, &side, &counts)?;
    let m = u.components;
    let mut idx = vec![0usize; d];
    let parent_of = |p: usize, idx: &mut [usize]| {
        sub.multi_index_into(p, idx);
        for k in 0..d {
            idx[k] += lo[k];
        }
        grid.flat(idx)
    };
    let mut values = vec![0.0; sub.node_count() * m];
    for p in 0..sub.node_count() {
        let q = parent_of(p, &mut idx);
        values[p * m..(p + 1) * m].copy_from_slice(u.node(q));
    }
    let restricted = GridFunction::new(sub.clone(), m, values)?;
    let coef = Coefficient::Constant(effective.tensor.clone());
    let opts = AssemblyOptions::default();
    let (w, stats) = solve_dirichlet_values(&coef, &sub, &restricted, None, solver, opts)?;
    let inner = ball_nodes(&sub, center, r)?;
    let diff: f64 = inner
        .iter()
        .map(|&p| w.node(p).iter().zip(restricted.node(p)).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / inner.len() as f64;
    let spread = deviation(u, &outer);
    let approx_error = if spread > 0.0 { diff.sqrt() / spread } else { diff.sqrt() };
    let coarse = affine_fit(&w, &inner, center, r)?;
    let fine_nodes = ball_nodes(&sub, center, theta * r)?;
    let fine = affine_fit(&w, &fine_nodes, center, theta * r)?;
    let contraction = if coarse.excess > 0.0 { fine.excess / coarse.excess } else { 0.0 };
    Ok(StepAudit {
        r,
        theta,
        approx_error,
        contraction,
        iterations: stats.iterations,
    })
}
