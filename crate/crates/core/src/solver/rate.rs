use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bvp::{solve_bvp, BoundaryData, BvpSpec, SourceFn};
use crate::discrete::{check_resolution, lp_norm, mean, Coefficient, Grid, GridFunction, SolverSettings};
use crate::error::{Error, Result};
use crate::field::{least_squares_line, TensorField};
use crate::homogenize::{omega, theta, EffectiveTensor, ModulusTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateMode {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub epsilon: f64,
    pub h: f64,
    pub l2_error: f64,
    pub omega: f64,
    pub theory_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub mode: RateMode,
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log error` against `log ε` (needs ≥ 4 rows).
    pub slope: Option<f64>,
    /// Every error is at solver-tolerance level; the slope is meaningless.
    pub degenerate: bool,
    /// `max / min` of the theory ratio column.
    pub ratio_spread: f64,
    /// Errors strictly decrease as `ε` decreases.
    pub monotone: bool,
    pub skipped: Vec<f64>,
}

/// Problem data for a rate sweep on a rectangle.
#[derive(Clone, Debug)]
pub struct RateSetup {
    pub origin: Vec<f64>,
    pub side: Vec<f64>,
    pub n: Vec<usize>,
    pub bc: BoundaryData,
    pub source: Option<SourceFn>,
    pub solver: SolverSettings,
    pub sigma: f64,
    /// Solve under-resolved `ε` instead of skipping them.
    pub override_resolution: bool,
}

impl RateSetup {
    fn spec(&self, coefficient: Coefficient) -> BvpSpec {
        BvpSpec {
            coefficient,
            origin: self.origin.clone(),
            side: self.side.clone(),
            n: self.n.clone(),
            bc: self.bc.clone(),
            source: self.source.clone(),
            solver: self.solver,
            override_resolution: self.override_resolution,
        }
    }
}

/// `Θ_σ(1/ε)` with the scan-floor case read as its true infimum 0.
fn theta_term(moduli: &ModulusTable, sigma: f64, epsilon: f64) -> Result<f64> {
    let th = theta(&moduli.rho, sigma, 1.0 / epsilon)?;
    Ok(if th.at_floor && moduli.rho.at(th.radius) == 0.0 { 0.0 } else { th.value })
}

/// Solves `u_ε` for each `ε` (in parallel) and `u₀` once with `Â`, and
/// tabulates `‖u_ε − u₀‖_{L²}` against the theoretical moduli.
///
/// Dirichlet ratio: `error / ω(ε)^{2/3}`. Neumann ratio (after mean
/// matching): `error / [Θ_σ(1/ε) + sup_{T≥1/ε} ψ-distance]^{1/2}`.
pub fn rate_sweep(
    field: &TensorField,
    epsilons: &[f64],
    mode: RateMode,
    setup: &RateSetup,
    effective: &EffectiveTensor,
    moduli: &ModulusTable,
) -> Result<RateReport> {
    if epsilons.is_empty() {
        return Err(Error::invalid("empty epsilon list"));
    }
    match (&setup.bc, mode) {
        (BoundaryData::Dirichlet(_), RateMode::Dirichlet) | (BoundaryData::Neumann(_), RateMode::Neumann) => {}
        _ => return Err(Error::invalid("boundary data does not match the rate mode")),
    }
    let grid = Grid::rectangle(&setup.origin, &setup.side, &setup.n)?;
    let mut eps: Vec<f64> = epsilons.to_vec();
    eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut skipped = Vec::new();
    let mut kept = Vec::new();
    for e in eps {
        match check_resolution(&Coefficient::oscillating(field, e), &grid) {
            Ok(()) => kept.push(e),
            Err(_) if setup.override_resolution => kept.push(e),
            Err(err) => {
                warn!("skipping epsilon = {e}: {err}");
                skipped.push(e);
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("every epsilon is under-resolved on this grid"));
    }
    let u0 = solve_bvp(&setup.spec(Coefficient::Constant(effective.tensor.clone())))?.u;
    let solutions: Vec<Result<GridFunction>> = kept
        .par_iter()
        .map(|e| solve_bvp(&setup.spec(Coefficient::oscillating(field, *e))).map(|s| s.u))
        .collect();
    let mut rows = Vec::with_capacity(kept.len());
    for (e, sol) in kept.iter().zip(solutions) {
        let mut diff = sol?.sub(&u0)?;
        if mode == RateMode::Neumann {
            let mu = mean(&diff);
            let m = diff.components;
            for (k, v) in diff.values.iter_mut().enumerate() {
                *v -= mu[k % m];
            }
        }
        let l2_error = lp_norm(&diff, 2.0)?;
        let om = omega(moduli, setup.sigma, *e)?;
        let denom = match mode {
            RateMode::Dirichlet => om.powf(2.0 / 3.0),
            RateMode::Neumann => (theta_term(moduli, setup.sigma, *e)? + moduli.psi_sup_from(1.0 / e)?).sqrt(),
        };
        rows.push(RateRow {
            epsilon: *e,
            h: grid.h_max(),
            l2_error,
            omega: om,
            theory_ratio: if denom > 0.0 { l2_error / denom } else { f64::NAN },
        });
    }
    let scale = lp_norm(&u0, 2.0)?.max(1.0);
    let degenerate = rows.iter().all(|r| r.l2_error <= 2.0 * setup.solver.tol * scale);
    let slope = if rows.len() >= 4 && !degenerate && rows.iter().all(|r| r.l2_error > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.l2_error.ln()).collect();
        Some(least_squares_line(&xs, &ys).0)
    } else {
        None
    };
    let ratios: Vec<f64> = rows.iter().map(|r| r.theory_ratio).filter(|v| v.is_finite() && *v > 0.0).collect();
    let ratio_spread = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let monotone = rows.windows(2).all(|w| w[1].l2_error < w[0].l2_error);
    Ok(RateReport {
        mode,
        rows,
        slope,
        degenerate,
        ratio_spread,
        monotone,
        skipped,
    })
}
