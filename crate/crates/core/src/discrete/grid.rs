use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform tensor-product grid on a box.
///
/// `n[k]` is the number of intervals along axis `k` and `h[k] = side[k] / n[k]`.
/// A periodic axis identifies its endpoints and carries `n[k]` nodes; a
/// non-periodic axis carries `n[k] + 1`. Nodes are numbered with axis 0
/// fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    origin: Vec<f64>,
    side: Vec<f64>,
    n: Vec<usize>,
    periodic: Vec<bool>,
}

impl Grid {
    pub fn new(origin: Vec<f64>, side: Vec<f64>, n: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        let d = origin.len();
        if d == 0 || side.len() != d || n.len() != d || periodic.len() != d {
            return Err(Error::invalid("grid vectors must share a nonzero length"));
        }
        if side.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("grid sides must be positive"));
        }
        if n.iter().any(|k| *k < 4) {
            return Err(Error::invalid("at least 4 intervals per axis required"));
        }
        Ok(Grid { origin, side, n, periodic })
    }

    /// Fully periodic cube `[0, side)^d` with `n` nodes per axis.
    pub fn periodic_box(d: usize, side: f64, n: usize) -> Result<Self> {
        Self::new(vec![0.0; d], vec![side; d], vec![n; d], vec![true; d])
    }

    /// Periodic box with per-axis sides.
    pub fn periodic_cell(side: &[f64], n: usize) -> Result<Self> {
        let d = side.len();
        Self::new(vec![0.0; d], side.to_vec(), vec![n; d], vec![true; d])
    }

    /// Closed rectangle with `n` intervals per axis.
    pub fn rectangle(origin: &[f64], side: &[f64], n: &[usize]) -> Result<Self> {
        let d = origin.len();
        Self::new(origin.to_vec(), side.to_vec(), n.to_vec(), vec![false; d])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn side(&self) -> &[f64] {
        &self.side
    }

    pub fn intervals(&self) -> &[usize] {
        &self.n
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }

    pub fn all_periodic(&self) -> bool {
        self.periodic.iter().all(|p| *p)
    }

    pub fn none_periodic(&self) -> bool {
        self.periodic.iter().all(|p| !*p)
    }

    #[inline]
    pub fn h(&self, axis: usize) -> f64 {
        self.side[axis] / self.n[axis] as f64
    }

    pub fn h_max(&self) -> f64 {
        (0..self.dim()).map(|k| self.h(k)).fold(0.0, f64::max)
    }

    #[inline]
    pub fn nodes_on_axis(&self, axis: usize) -> usize {
        if self.periodic[axis] {
            self.n[axis]
        } else {
            self.n[axis] + 1
        }
    }

    pub fn node_count(&self) -> usize {
        (0..self.dim()).map(|k| self.nodes_on_axis(k)).product()
    }

    #[inline]
    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for k in (0..self.dim()).rev() {
            f = f * self.nodes_on_axis(k) + idx[k];
        }
        f
    }

    #[inline]
    pub fn multi_index_into(&self, mut flat: usize, idx: &mut [usize]) {
        for (k, slot) in idx.iter_mut().enumerate() {
            let nk = self.nodes_on_axis(k);
            *slot = flat % nk;
            flat /= nk;
        }
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        self.multi_index_into(flat, &mut idx);
        idx
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.h(axis)
    }

    pub fn point_into(&self, flat: usize, x: &mut [f64]) {
        let mut f = flat;
        for (k, xk) in x.iter_mut().enumerate() {
            let nk = self.nodes_on_axis(k);
            *xk = self.coord(k, f % nk);
            f /= nk;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.point_into(flat, &mut x);
        x
    }

    /// Index one step along `axis`, wrapping on periodic axes; `None` past a
    /// non-periodic boundary.
    #[inline]
    pub fn step(&self, i: usize, axis: usize, forward: bool) -> Option<usize> {
        let nk = self.nodes_on_axis(axis);
        if forward {
            if i + 1 < nk {
                Some(i + 1)
            } else if self.periodic[axis] {
                Some(0)
            } else {
                None
            }
        } else if i > 0 {
            Some(i - 1)
        } else if self.periodic[axis] {
            Some(nk - 1)
        } else {
            None
        }
    }

    #[inline]
    pub fn on_boundary(&self, axis: usize, i: usize) -> bool {
        !self.periodic[axis] && (i == 0 || i == self.n[axis])
    }

    pub fn is_boundary_node(&self, flat: usize) -> bool {
        let idx = self.multi_index(flat);
        (0..self.dim()).any(|k| self.on_boundary(k, idx[k]))
    }

    /// Trapezoid weight of a node along one axis.
    #[inline]
    pub fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        if self.on_boundary(axis, i) {
            0.5 * self.h(axis)
        } else {
            self.h(axis)
        }
    }

    /// Dual-cell volume of a node (the trapezoid quadrature weight).
    pub fn dual_volume(&self, flat: usize) -> f64 {
        let mut f = flat;
        let mut w = 1.0;
        for k in 0..self.dim() {
            let nk = self.nodes_on_axis(k);
            w *= self.axis_weight(k, f % nk);
            f /= nk;
        }
        w
    }

    pub fn volume(&self) -> f64 {
        self.side.iter().product()
    }

    /// Whether a point lies in the closed box (periodic axes always contain it).
    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| {
            self.periodic[k] || (x[k] >= self.origin[k] - 1e-12 && x[k] <= self.origin[k] + self.side[k] + 1e-12)
        })
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.n == other.n
            && self.periodic == other.periodic
            && self
                .side
                .iter()
                .zip(&other.side)
                .chain(self.origin.iter().zip(&other.origin))
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }
}

/// Node values of an `components`-vector field, node-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub components: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::invalid("grid function needs at least one component"));
        }
        if values.len() != grid.node_count() * components {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.node_count() * components,
                values.len()
            )));
        }
        Ok(GridFunction { grid, components, values })
    }

    pub fn zeros(grid: Grid, components: usize) -> Self {
        let len = grid.node_count() * components;
        GridFunction {
            grid,
            components,
            values: vec![0.0; len],
        }
    }

    /// Samples `f(x)` (which writes `components` values) at every node.
    pub fn from_fn(grid: Grid, components: usize, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Self {
        use rayon::prelude::*;
        let mut values = vec![0.0; grid.node_count() * components];
        values.par_chunks_mut(components).enumerate().for_each(|(p, out)| {
            let x = grid.point(p);
            f(&x, out);
        });
        GridFunction { grid, components, values }
    }

    pub fn node(&self, p: usize) -> &[f64] {
        &self.values[p * self.components..(p + 1) * self.components]
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(self.components).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other)?;
        Ok(GridFunction {
            grid: self.grid.clone(),
            components: self.components,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if !self.grid.same_shape(&other.grid) || self.components != other.components {
            return Err(Error::GridMismatch("grid functions live on different grids".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts_and_indexing() {
        let g = Grid::new(vec![0.0, 1.0], vec![1.0, 2.0], vec![4, 8], vec![true, false]).unwrap();
        assert_eq!(g.nodes_on_axis(0), 4);
        assert_eq!(g.nodes_on_axis(1), 9);
        assert_eq!(g.node_count(), 36);
        for p in 0..g.node_count() {
            assert_eq!(g.flat(&g.multi_index(p)), p);
        }
        assert_eq!(g.point(g.flat(&[3, 8])), vec![0.75, 3.0]);
        assert_eq!(g.step(3, 0, true), Some(0));
        assert_eq!(g.step(8, 1, true), None);
        let total: f64 = (0..g.node_count()).map(|p| g.dual_volume(p)).sum();
        assert!((total - g.volume()).abs() < 1e-14);
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(Grid::periodic_box(2, 1.0, 3).is_err());
        assert!(Grid::periodic_box(2, 0.0, 8).is_err());
    }
}
