use super::grid::{Grid, GridFunction};
use crate::error::{Error, Result};

/// Per-component trapezoid mean over the grid box.
pub fn mean(f: &GridFunction) -> Vec<f64> {
    let m = f.components;
    let mut s = vec![0.0; m];
    let mut w = 0.0;
    for p in 0..f.grid.node_count() {
        let wp = f.grid.dual_volume(p);
        w += wp;
        for (c, sc) in s.iter_mut().enumerate() {
            *sc += wp * f.values[p * m + c];
        }
    }
    s.into_iter().map(|v| v / w).collect()
}

/// `‖f‖_{L^p}` of the pointwise Euclidean norm, trapezoid quadrature;
/// `p = ∞` gives the node maximum.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("p must be at least 1, got {p}")));
    }
    let m = f.components;
    let pointwise = |q: usize| f.values[q * m..(q + 1) * m].iter().map(|v| v * v).sum::<f64>().sqrt();
    if p.is_infinite() {
        return Ok((0..f.grid.node_count()).map(pointwise).fold(0.0, f64::max));
    }
    let s: f64 = (0..f.grid.node_count()).map(|q| f.grid.dual_volume(q) * pointwise(q).powf(p)).sum();
    Ok(s.powf(1.0 / p))
}

/// Nodes with `|x − center| ≤ r`. The ball must fit in the box along every
/// non-periodic axis.
pub fn ball_nodes(grid: &Grid, center: &[f64], r: f64) -> Result<Vec<usize>> {
    let d = grid.dim();
    if center.len() != d || !(r > 0.0) {
        return Err(Error::invalid("ball needs a d-dimensional center and positive radius"));
    }
    for k in 0..d {
        if grid.is_periodic(k) {
            continue;
        }
        let (lo, hi) = (grid.origin()[k], grid.origin()[k] + grid.side()[k]);
        if center[k] - r < lo - 1e-12 || center[k] + r > hi + 1e-12 {
            return Err(Error::OutsideGrid(format!("ball of radius {r} at {center:?} leaves the box along axis {k}")));
        }
    }
    let mut ranges = Vec::with_capacity(d);
    for k in 0..d {
        let h = grid.h(k);
        let lo = ((center[k] - r - grid.origin()[k]) / h - 1e-9).ceil() as i64;
        let hi = ((center[k] + r - grid.origin()[k]) / h + 1e-9).floor() as i64;
        ranges.push((lo, hi));
    }
    let mut out = Vec::new();
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut idx = vec![0usize; d];
    'walk: loop {
        let mut dist2 = 0.0;
        for k in 0..d {
            let x = grid.origin()[k] + cur[k] as f64 * grid.h(k);
            dist2 += (x - center[k]).powi(2);
            let nk = grid.nodes_on_axis(k) as i64;
            idx[k] = cur[k].rem_euclid(nk) as usize;
        }
        if dist2 <= r * r * (1.0 + 1e-12) {
            out.push(grid.flat(&idx));
        }
        for k in 0..d {
            cur[k] += 1;
            if cur[k] <= ranges[k].1 {
                continue 'walk;
            }
            cur[k] = ranges[k].0;
        }
        break;
    }
    if out.is_empty() {
        return Err(Error::OutsideGrid("ball contains no grid nodes".into()));
    }
    Ok(out)
}

/// `(node-mean over B(center, r) of |f|²)^{1/2}`.
pub fn l2_avg_ball(f: &GridFunction, center: &[f64], r: f64) -> Result<f64> {
    let nodes = ball_nodes(&f.grid, center, r)?;
    let m = f.components;
    let s: f64 = nodes
        .iter()
        .map(|&p| f.values[p * m..(p + 1) * m].iter().map(|v| v * v).sum::<f64>())
        .sum();
    Ok((s / nodes.len() as f64).sqrt())
}

/// Centered-difference gradient with second-order one-sided differences at
/// non-periodic boundaries. Output component `α·d + i` holds `∂_i f^α`.
pub fn gradient(f: &GridFunction) -> GridFunction {
    use rayon::prelude::*;
    let grid = &f.grid;
    let d = grid.dim();
    let m = f.components;
    let mut values = vec![0.0; grid.node_count() * m * d];
    values.par_chunks_mut(m * d).enumerate().for_each(|(p, out)| {
        let idx = grid.multi_index(p);
        let mut j = idx.clone();
        let mut at = |axis: usize, i: usize| {
            j[axis] = i;
            let q = grid.flat(&j);
            j[axis] = idx[axis];
            q
        };
        for k in 0..d {
            let h = grid.h(k);
            let i = idx[k];
            let stencil: [(usize, f64); 3] = match (grid.step(i, k, false), grid.step(i, k, true)) {
                (Some(a), Some(b)) => [(at(k, a), -0.5 / h), (at(k, b), 0.5 / h), (p, 0.0)],
                (None, Some(b)) => [(p, -1.5 / h), (at(k, b), 2.0 / h), (at(k, b + 1), -0.5 / h)],
                (Some(a), None) => [(p, 1.5 / h), (at(k, a), -2.0 / h), (at(k, a - 1), 0.5 / h)],
                (None, None) => unreachable!("axes have at least 4 intervals"),
            };
            for a in 0..m {
                out[a * d + k] = stencil.iter().map(|(q, w)| w * f.values[q * m + a]).sum();
            }
        }
    });
    GridFunction {
        grid: grid.clone(),
        components: m * d,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_mean_and_sup() {
        let g = Grid::rectangle(&[0.0, 0.0], &[1.0, 2.0], &[8, 6]).unwrap();
        let f = GridFunction::from_fn(g, 1, |_, o| o[0] = -2.5);
        assert!((mean(&f)[0] + 2.5).abs() < 1e-14);
        assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 2.5);
        assert!((lp_norm(&f, 2.0).unwrap() - 2.5 * 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn periodic_sine_has_zero_mean() {
        let g = Grid::periodic_box(2, 1.0, 32).unwrap();
        let f = GridFunction::from_fn(g, 1, |x, o| o[0] = (2.0 * PI * x[0]).sin());
        assert!(mean(&f)[0].abs() <= 1e-14);
    }

    #[test]
    fn gradient_exact_on_quadratics() {
        let g = Grid::rectangle(&[0.0], &[1.0], &[10]).unwrap();
        let f = GridFunction::from_fn(g.clone(), 1, |x, o| o[0] = x[0] * x[0]);
        let df = gradient(&f);
        for p in 0..g.node_count() {
            let x = g.point(p)[0];
            assert!((df.values[p] - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_membership() {
        let g = Grid::rectangle(&[0.0, 0.0], &[1.0, 1.0], &[10, 10]).unwrap();
        let nodes = ball_nodes(&g, &[0.5, 0.5], 0.1).unwrap();
        assert_eq!(nodes.len(), 5);
        assert!(ball_nodes(&g, &[0.05, 0.5], 0.1).is_err());
        let f = GridFunction::from_fn(g, 1, |_, o| o[0] = 3.0);
        assert!((l2_avg_ball(&f, &[0.5, 0.5], 0.3).unwrap() - 3.0).abs() < 1e-14);
    }
}
