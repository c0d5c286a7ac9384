use crate::corrector::CorrectorSet;
use crate::discrete::{gradient, GridFunction};
use crate::error::{Error, Result};

/// Multilinear interpolation of all correctors at `y`, wrapping periodically
/// on the corrector box. Output index `(j·m + β)·m + α`.
pub fn interpolate_corrector(cs: &CorrectorSet, y: &[f64], out: &mut [f64]) {
    let grid = &cs.grid;
    let d = grid.dim();
    let m = cs.components();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for k in 0..d {
        let n = grid.nodes_on_axis(k);
        let s = (y[k] - grid.origin()[k]) / grid.h(k);
        let f = s.floor();
        frac[k] = s - f;
        base[k] = (f as i64).rem_euclid(n as i64) as usize;
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut idx = vec![0usize; d];
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        for k in 0..d {
            let up = (corner >> k) & 1 == 1;
            idx[k] = if up { (base[k] + 1) % grid.nodes_on_axis(k) } else { base[k] };
            w *= if up { frac[k] } else { 1.0 - frac[k] };
        }
        if w == 0.0 {
            continue;
        }
        let p = grid.flat(&idx);
        for (c, chi) in cs.chi.iter().enumerate() {
            for a in 0..m {
                out[c * m + a] += w * chi.values[p * m + a];
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Remainder {
    /// `u_ε − v₀ − εχ_T(x/ε)∇v₀`.
    pub w: GridFunction,
    pub l2: f64,
    pub h1: f64,
    /// The same norms of `u_ε − v₀` for comparison.
    pub baseline_l2: f64,
    pub baseline_h1: f64,
}

fn interior_norms(f: &GridFunction, margin: usize) -> (f64, f64) {
    let grid = &f.grid;
    let d = grid.dim();
    let g = gradient(f);
    let (mut l2, mut h1) = (0.0, 0.0);
    for p in 0..grid.node_count() {
        let idx = grid.multi_index(p);
        let inside = (0..d).all(|k| grid.is_periodic(k) || (idx[k] >= margin && idx[k] + margin <= grid.intervals()[k]));
        if !inside {
            continue;
        }
        let w = grid.dual_volume(p);
        let v2: f64 = f.node(p).iter().map(|v| v * v).sum();
        let g2: f64 = g.node(p).iter().map(|v| v * v).sum();
        l2 += w * v2;
        h1 += w * (v2 + g2);
    }
    (l2.sqrt(), h1.sqrt())
}

/// Two-scale remainder with norms over the interior (2-cell margin from
/// non-periodic boundaries). `cs.t` must equal `1/ε` to within one unit, or
/// be the exact cell corrector.
pub fn two_scale_remainder(u_eps: &GridFunction, v0: &GridFunction, cs: &CorrectorSet, epsilon: f64) -> Result<Remainder> {
    u_eps.check_compatible(v0)?;
    let m = cs.components();
    let d = cs.dim();
    if u_eps.components != m || u_eps.grid.dim() != d {
        return Err(Error::GridMismatch("solution and corrector set differ in shape".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if cs.t.is_finite() && (cs.t - 1.0 / epsilon).abs() > 1.0 {
        return Err(Error::invalid(format!("corrector T = {} does not match 1/ε = {}", cs.t, 1.0 / epsilon)));
    }
    let grid = &u_eps.grid;
    let grad_v0 = gradient(v0);
    let mut values = vec![0.0; u_eps.values.len()];
    let mut chi = vec![0.0; d * m * m];
    let mut y = vec![0.0; d];
    for p in 0..grid.node_count() {
        let x = grid.point(p);
        for k in 0..d {
            y[k] = x[k] / epsilon;
        }
        interpolate_corrector(cs, &y, &mut chi);
        let gv = grad_v0.node(p);
        for a in 0..m {
            let mut corr = 0.0;
            for j in 0..d {
                for b in 0..m {
                    corr += chi[(j * m + b) * m + a] * gv[b * d + j];
                }
            }
            values[p * m + a] = u_eps.values[p * m + a] - v0.values[p * m + a] - epsilon * corr;
        }
    }
    let w = GridFunction::new(grid.clone(), m, values)?;
    let (l2, h1) = interior_norms(&w, 2);
    let (baseline_l2, baseline_h1) = interior_norms(&u_eps.sub(v0)?, 2);
    Ok(Remainder {
        w,
        l2,
        h1,
        baseline_l2,
        baseline_h1,
    })
}
