//! Coefficient tensors `A(y) = (a_ij^{αβ}(y))` given as real trigonometric
//! polynomials, together with their structural moduli: ellipticity,
//! Lipschitz constant, the almost-periodicity modulus `ρ(R)` and a
//! logarithmic decay fit of `ρ`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rank-4 tensor `a_ij^{αβ}` with `i, j < d` and `α, β < m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefTensor {
    d: usize,
    m: usize,
    data: Vec<f64>,
}

impl CoefTensor {
    pub fn zeros(d: usize, m: usize) -> Self {
        CoefTensor {
            d,
            m,
            data: vec![0.0; d * d * m * m],
        }
    }

    /// `s · δ_ij δ^{αβ}`.
    pub fn isotropic(d: usize, m: usize, s: f64) -> Self {
        let mut t = Self::zeros(d, m);
        for i in 0..d {
            for a in 0..m {
                t.set(i, i, a, a, s);
            }
        }
        t
    }

    pub fn from_vec(d: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != d * d * m * m {
            return Err(Error::invalid(format!(
                "tensor needs {} entries for d={d}, m={m}, got {}",
                d * d * m * m,
                data.len()
            )));
        }
        Ok(CoefTensor { d, m, data })
    }

    #[inline]
    pub fn index(d: usize, m: usize, i: usize, j: usize, a: usize, b: usize) -> usize {
        ((i * d + j) * m + a) * m + b
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.data[Self::index(self.d, self.m, i, j, a, b)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, a: usize, b: usize, v: f64) {
        let k = Self::index(self.d, self.m, i, j, a, b);
        self.data[k] = v;
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    /// `Σ a_ij^{αβ} ξ_i^α ζ_j^β`, with `ξ` flattened as `ξ[α·d + i]`.
    pub fn bilinear(&self, xi: &[f64], zeta: &[f64]) -> f64 {
        bilinear_slice(&self.data, self.d, self.m, xi, zeta)
    }

    /// The tensor as an `(md) × (md)` matrix acting on `ξ ∈ R^{m×d}`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        matrix_of(&self.data, self.d, self.m)
    }

    /// Adjoint `a_ji^{βα}`.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.d, self.m);
        for i in 0..self.d {
            for j in 0..self.d {
                for a in 0..self.m {
                    for b in 0..self.m {
                        out.set(j, i, b, a, self.get(i, j, a, b));
                    }
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        let adj = self.adjoint();
        self.data
            .iter()
            .zip(&adj.data)
            .all(|(a, b)| (a - b).abs() <= 1e-14 * (1.0 + a.abs()))
    }
}

pub(crate) fn bilinear_slice(data: &[f64], d: usize, m: usize, xi: &[f64], zeta: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            for a in 0..m {
                for b in 0..m {
                    s += data[CoefTensor::index(d, m, i, j, a, b)] * xi[a * d + i] * zeta[b * d + j];
                }
            }
        }
    }
    s
}

pub(crate) fn matrix_of(data: &[f64], d: usize, m: usize) -> DMatrix<f64> {
    let n = d * m;
    DMatrix::from_fn(n, n, |r, c| {
        let (a, i) = (r / d, r % d);
        let (b, j) = (c / d, c % d);
        data[CoefTensor::index(d, m, i, j, a, b)]
    })
}

/// One Fourier mode `cos·cos(ω·y) + sin·sin(ω·y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub freq: Vec<f64>,
    pub cos: CoefTensor,
    pub sin: CoefTensor,
}

/// `A(y) = mean + Σ_k cos_k cos(ω_k·y) + sin_k sin(ω_k·y)`.
///
/// Immutable after construction. `mu` is the claimed lower ellipticity
/// constant; `period`, when present, is a lattice of periods compatible
/// with every frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorField {
    d: usize,
    m: usize,
    mean: CoefTensor,
    modes: Vec<Mode>,
    mu: f64,
    period: Option<Vec<f64>>,
}

impl TensorField {
    pub fn new(
        mean: CoefTensor,
        modes: Vec<Mode>,
        mu: f64,
        period: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (d, m) = (mean.d, mean.m);
        if d == 0 || m == 0 {
            return Err(Error::invalid("dimension and system size must be at least 1"));
        }
        if !(mu > 0.0) {
            return Err(Error::invalid(format!("ellipticity constant must be positive, got {mu}")));
        }
        for (k, mode) in modes.iter().enumerate() {
            if mode.freq.len() != d || mode.cos.d != d || mode.cos.m != m || mode.sin.d != d || mode.sin.m != m {
                return Err(Error::invalid(format!("mode {k} has inconsistent dimensions")));
            }
            if mode.freq.iter().any(|w| !w.is_finite()) {
                return Err(Error::invalid(format!("mode {k} has a non-finite frequency")));
            }
        }
        if let Some(p) = &period {
            if p.len() != d || p.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::invalid("period lattice must have d positive entries"));
            }
            for (k, mode) in modes.iter().enumerate() {
                for (w, l) in mode.freq.iter().zip(p) {
                    let cycles = w * l / (2.0 * PI);
                    if (cycles - cycles.round()).abs() > 1e-9 * (1.0 + cycles.abs()) {
                        return Err(Error::invalid(format!(
                            "mode {k} frequency {w} is not compatible with period {l}"
                        )));
                    }
                }
            }
        }
        Ok(TensorField {
            d,
            m,
            mean,
            modes,
            mu,
            period,
        })
    }

    /// Constant coefficient tensor.
    pub fn constant(mean: CoefTensor, mu: f64) -> Result<Self> {
        Self::new(mean, Vec::new(), mu, None)
    }

    /// Scalar (m = 1) isotropic field `a(y) I` with
    /// `a(y) = mean + Σ c_k cos(ω_k·y) + s_k sin(ω_k·y)`.
    pub fn scalar(d: usize, mean: f64, modes: &[(Vec<f64>, f64, f64)], mu: f64, period: Option<Vec<f64>>) -> Result<Self> {
        let modes = modes
            .iter()
            .map(|(w, c, s)| Mode {
                freq: w.clone(),
                cos: CoefTensor::isotropic(d, 1, *c),
                sin: CoefTensor::isotropic(d, 1, *s),
            })
            .collect();
        Self::new(CoefTensor::isotropic(d, 1, mean), modes, mu, period)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mean(&self) -> &CoefTensor {
        &self.mean
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn period(&self) -> Option<&[f64]> {
        self.period.as_deref()
    }

    pub fn is_constant(&self) -> bool {
        self.modes.iter().all(|m| m.cos.is_zero() && m.sin.is_zero())
    }

    /// Number of tensor entries `d²m²`.
    pub fn entry_count(&self) -> usize {
        self.d * self.d * self.m * self.m
    }

    /// Pointwise symmetry `A = A*` (checked on every tensor of the expansion).
    pub fn is_symmetric(&self) -> bool {
        self.mean.is_symmetric() && self.modes.iter().all(|m| m.cos.is_symmetric() && m.sin.is_symmetric())
    }

    pub fn max_frequency(&self) -> f64 {
        self.modes
            .iter()
            .filter(|m| !(m.cos.is_zero() && m.sin.is_zero()))
            .map(|m| norm(&m.freq))
            .fold(0.0, f64::max)
    }

    pub fn min_frequency(&self) -> f64 {
        self.modes
            .iter()
            .filter(|m| !(m.cos.is_zero() && m.sin.is_zero()))
            .map(|m| norm(&m.freq))
            .filter(|w| *w > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// `2π / max_k |ω_k|`, or `None` for a constant field.
    pub fn oscillation_scale(&self) -> Option<f64> {
        let w = self.max_frequency();
        (w > 0.0).then(|| 2.0 * PI / w)
    }

    pub fn evaluate(&self, y: &[f64]) -> CoefTensor {
        let mut out = CoefTensor::zeros(self.d, self.m);
        self.evaluate_into(y, &mut out.data);
        out
    }

    pub fn evaluate_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.mean.data);
        for mode in &self.modes {
            let phase: f64 = mode.freq.iter().zip(y).map(|(w, x)| w * x).sum();
            let (s, c) = phase.sin_cos();
            for ((o, ca), sa) in out.iter_mut().zip(&mode.cos.data).zip(&mode.sin.data) {
                *o += ca * c + sa * s;
            }
        }
    }

    /// Entrywise bound `|mean| + Σ_k (|cos_k| + |sin_k|)`.
    pub fn entrywise_bound(&self) -> CoefTensor {
        let mut out = self.mean.clone();
        out.data.iter_mut().for_each(|v| *v = v.abs());
        for mode in &self.modes {
            for ((o, c), s) in out.data.iter_mut().zip(&mode.cos.data).zip(&mode.sin.data) {
                *o += c.abs() + s.abs();
            }
        }
        out
    }

    /// Upper bound for `sup_y |A(y)|` in the operator norm on `R^{m×d}`
    /// (Frobenius norm of the entrywise bound).
    pub fn sup_norm_bound(&self) -> f64 {
        self.entrywise_bound().data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// The same field with every frequency rounded to the lattice
    /// `(2π/L_i) Z` of a periodic box with sides `box_side`. Returns the
    /// rounded field and `max_k |ω_k − ω̃_k|`.
    pub fn periodize(&self, box_side: &[f64]) -> (TensorField, f64) {
        let mut err: f64 = 0.0;
        let modes = self
            .modes
            .iter()
            .map(|mode| {
                let freq: Vec<f64> = mode
                    .freq
                    .iter()
                    .zip(box_side)
                    .map(|(w, l)| {
                        let q = 2.0 * PI / l;
                        (w / q).round() * q
                    })
                    .collect();
                let diff: Vec<f64> = freq.iter().zip(&mode.freq).map(|(a, b)| a - b).collect();
                err = err.max(norm(&diff));
                Mode {
                    freq,
                    cos: mode.cos.clone(),
                    sin: mode.sin.clone(),
                }
            })
            .collect();
        let field = TensorField {
            d: self.d,
            m: self.m,
            mean: self.mean.clone(),
            modes,
            mu: self.mu,
            period: Some(box_side.to_vec()),
        };
        (field, err)
    }

    /// The field translated by `c`: `y ↦ A(y + c)`.
    pub fn shifted(&self, c: &[f64]) -> TensorField {
        let modes = self
            .modes
            .iter()
            .map(|mode| {
                let phase: f64 = mode.freq.iter().zip(c).map(|(w, x)| w * x).sum();
                let (s, co) = phase.sin_cos();
                // cos(θ+φ) = cosθ cosφ − sinθ sinφ, sin(θ+φ) = sinθ cosφ + cosθ sinφ
                let mut cos = CoefTensor::zeros(self.d, self.m);
                let mut sin = CoefTensor::zeros(self.d, self.m);
                for k in 0..cos.data.len() {
                    cos.data[k] = mode.cos.data[k] * co + mode.sin.data[k] * s;
                    sin.data[k] = mode.sin.data[k] * co - mode.cos.data[k] * s;
                }
                Mode {
                    freq: mode.freq.clone(),
                    cos,
                    sin,
                }
            })
            .collect();
        TensorField {
            modes,
            ..self.clone()
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Result of sampling the quadratic form `a_ij^{αβ}(y) ξ_i^α ξ_j^β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub mu_lower: f64,
    pub mu_upper: f64,
    /// `μ ≤ mu_lower` within 1e-12.
    pub pass: bool,
    /// The two-sided normalization `μ ≤ · ≤ μ⁻¹`.
    pub two_sided: bool,
}

/// Samples `sample_count` random pairs `(y, ξ)` with `|ξ| = 1` and records
/// the extreme Rayleigh quotients. Points `y` are drawn from one period cell
/// when a lattice is known, otherwise from `[-50, 50]^d`.
pub fn ellipticity_check(field: &TensorField, sample_count: usize, seed: u64) -> Result<EllipticityReport> {
    if sample_count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let d = field.d;
    let n = d * field.m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![0.0; field.entry_count()];
    let mut y = vec![0.0; d];
    let mut xi = vec![0.0; n];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..sample_count {
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = match field.period() {
                Some(p) => rng.gen::<f64>() * p[k],
                None => rng.gen_range(-50.0..50.0),
            };
        }
        loop {
            for x in xi.iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
            let r = norm(&xi);
            if r > 1e-3 && r <= 1.0 {
                xi.iter_mut().for_each(|x| *x /= r);
                break;
            }
        }
        field.evaluate_into(&y, &mut a);
        let q = bilinear_slice(&a, d, field.m, &xi, &xi);
        lo = lo.min(q);
        hi = hi.max(q);
    }
    let mu = field.mu;
    Ok(EllipticityReport {
        mu_lower: lo,
        mu_upper: hi,
        pass: mu <= lo + 1e-12,
        two_sided: mu <= lo + 1e-12 && hi <= 1.0 / mu + 1e-12,
    })
}

/// Lipschitz bound `τ` with `λ = 1`: `|a(x) − a(y)| ≤ τ|x − y|` for every entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderModulus {
    pub tau: f64,
    pub lambda: f64,
}

pub fn holder_modulus(field: &TensorField) -> HolderModulus {
    let mut per_entry = vec![0.0; field.entry_count()];
    for mode in &field.modes {
        let w = norm(&mode.freq);
        for ((t, c), s) in per_entry.iter_mut().zip(&mode.cos.data).zip(&mode.sin.data) {
            *t += w * (c.abs() + s.abs());
        }
    }
    HolderModulus {
        tau: per_entry.into_iter().fold(0.0, f64::max),
        lambda: 1.0,
    }
}

/// Sampling parameters for the modulus `ρ(R)`.
///
/// For fields with a period lattice the shift `y` and the sup-norm window
/// both range over one period cell, which is exact up to sampling. Otherwise
/// `y` ranges over `[0, y_range]^d` and the sup-norm is sampled on the
/// window `[-window_radius, window_radius]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoSearch {
    pub y_samples: usize,
    pub y_range: f64,
    pub z_step: f64,
    pub window_radius: f64,
    pub window_samples: usize,
    pub refine_levels: usize,
}

impl Default for RhoSearch {
    fn default() -> Self {
        RhoSearch {
            y_samples: 200,
            y_range: 200.0,
            z_step: 0.02,
            window_radius: 50.0,
            window_samples: 2000,
            refine_levels: 3,
        }
    }
}

impl RhoSearch {
    /// Doubles every sampling resolution.
    pub fn refined(&self) -> Self {
        RhoSearch {
            y_samples: self.y_samples * 2,
            z_step: self.z_step / 2.0,
            window_samples: self.window_samples * 2,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.y_samples == 0 || self.window_samples == 0 || !(self.z_step > 0.0) || !(self.window_radius > 0.0) || !(self.y_range >= 0.0) {
            return Err(Error::invalid("rho search parameters must be positive"));
        }
        Ok(())
    }
}

/// A sampled value of `ρ(R)` with its sampling-bias interval.
///
/// The sampled sup over `y` and `x` underestimates, the gridded inf over `z`
/// overestimates; `[lower, upper]` widens the estimate by the Lipschitz
/// constant of the field times the respective sampling half-spacings. The
/// truncation of `x` to a finite window is not covered by the interval for
/// non-periodic fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoTable {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub search: RhoSearch,
}

impl RhoTable {
    /// A table from explicit values (bias interval collapsed to the values).
    pub fn from_values(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::invalid("radii and values differ in length"));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("radii must be strictly increasing"));
        }
        Ok(RhoTable {
            lower: values.clone(),
            upper: values.clone(),
            radii,
            values,
            search: RhoSearch::default(),
        })
    }

    /// Piecewise-constant evaluation: the value at the largest tabulated
    /// radius not exceeding `r` (monotone, so this is an upper estimate),
    /// and the first value for `r` below the table.
    pub fn at(&self, r: f64) -> f64 {
        match self.radii.iter().rposition(|x| *x <= r) {
            Some(k) => self.values[k],
            None => self.values.first().copied().unwrap_or(0.0),
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

pub fn rho(field: &TensorField, radius: f64, search: &RhoSearch) -> Result<RhoEstimate> {
    let table = rho_table(field, &[radius], search)?;
    Ok(RhoEstimate {
        value: table.values[0],
        lower: table.lower[0],
        upper: table.upper[0],
    })
}

/// `ρ(R) = sup_y inf_{|z|≤R} ‖A(·+y) − A(·+z)‖_∞` on an increasing list of
/// radii. The inf is taken over a nested z-grid refined locally around the
/// best candidate, and the running minimum is carried to larger radii, so
/// the returned values are nonincreasing in `R`.
pub fn rho_table(field: &TensorField, radii: &[f64], search: &RhoSearch) -> Result<RhoTable> {
    search.validate()?;
    if radii.is_empty() {
        return Err(Error::invalid("at least one radius required"));
    }
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::invalid("radius must be positive"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("radii must be strictly increasing"));
    }
    let d = field.d;
    if field.is_constant() {
        let zeros = vec![0.0; radii.len()];
        return Ok(RhoTable {
            radii: radii.to_vec(),
            values: zeros.clone(),
            lower: zeros.clone(),
            upper: zeros,
            search: search.clone(),
        });
    }

    let probe = ShiftProbe::new(field, search);

    // y samples (per axis), shared over radii
    let y_per_axis = axis_samples(search.y_samples, d);
    let y_extent: Vec<f64> = match field.period() {
        Some(p) => p.to_vec(),
        None => vec![search.y_range; d],
    };
    let y_points = lattice_points(&y_extent, y_per_axis, false);

    // z candidates sorted by norm, inside the largest ball
    let r_max = *radii.last().unwrap();
    let kmax = (r_max / search.z_step).floor() as i64;
    let mut z_points: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![-kmax; d];
    loop {
        let z: Vec<f64> = idx.iter().map(|k| *k as f64 * search.z_step).collect();
        if norm(&z) <= r_max + 1e-12 {
            z_points.push(z);
        }
        let mut a = 0;
        loop {
            if a == d {
                break;
            }
            idx[a] += 1;
            if idx[a] > kmax {
                idx[a] = -kmax;
                a += 1;
            } else {
                break;
            }
        }
        if a == d {
            break;
        }
    }
    z_points.sort_by(|a, b| norm(a).partial_cmp(&norm(b)).unwrap());

    let refine_levels = search.refine_levels;
    let z_step = search.z_step;
    let per_y: Vec<Vec<f64>> = y_points
        .par_iter()
        .map(|y| {
            let mut best = f64::INFINITY;
            let mut best_z: Vec<f64> = vec![0.0; d];
            let mut hot = 0usize;
            let mut next = 0usize;
            let mut out = Vec::with_capacity(radii.len());
            for &r in radii {
                while next < z_points.len() && norm(&z_points[next]) <= r + 1e-12 {
                    if let Some(v) = probe.distance(y, &z_points[next], best, &mut hot) {
                        best = v;
                        best_z = z_points[next].clone();
                    }
                    next += 1;
                }
                // local refinement around the current minimizer
                let mut step = z_step;
                for _ in 0..refine_levels {
                    let before = best;
                    step /= 2.0;
                    let center = best_z.clone();
                    for offset in stencil_offsets(d) {
                        let z: Vec<f64> = center.iter().zip(&offset).map(|(c, o)| c + *o as f64 * step).collect();
                        if norm(&z) > r + 1e-12 {
                            continue;
                        }
                        if let Some(v) = probe.distance(y, &z, best, &mut hot) {
                            best = v;
                            best_z = z;
                        }
                    }
                    if before - best < 1e-3 {
                        break;
                    }
                }
                out.push(best);
            }
            out
        })
        .collect();

    let mut values = vec![0.0f64; radii.len()];
    for row in &per_y {
        for (v, x) in values.iter_mut().zip(row) {
            *v = v.max(*x);
        }
    }

    let tau = holder_modulus(field).tau;
    let sqrt_d = (d as f64).sqrt();
    let y_gap = y_extent.iter().map(|e| e / y_per_axis as f64).fold(0.0, f64::max);
    let x_gap = probe.spacing;
    // refinement is local, so only the coarse z-grid covers the whole ball
    let z_gap = z_step;
    let lower = values.iter().map(|v| (v - tau * z_gap * sqrt_d / 2.0).max(0.0)).collect();
    let upper = values
        .iter()
        .map(|v| v + tau * y_gap * sqrt_d / 2.0 + 2.0 * tau * x_gap * sqrt_d / 2.0)
        .collect();
    Ok(RhoTable {
        radii: radii.to_vec(),
        values,
        lower,
        upper,
        search: search.clone(),
    })
}

fn axis_samples(total: usize, d: usize) -> usize {
    ((total as f64).powf(1.0 / d as f64).round() as usize).max(1)
}

fn lattice_points(extent: &[f64], per_axis: usize, centered: bool) -> Vec<Vec<f64>> {
    let d = extent.len();
    let count = per_axis.pow(d as u32);
    (0..count)
        .map(|mut k| {
            (0..d)
                .map(|a| {
                    let i = k % per_axis;
                    k /= per_axis;
                    let t = i as f64 / per_axis as f64;
                    if centered {
                        (t - 0.5) * extent[a]
                    } else {
                        t * extent[a]
                    }
                })
                .collect()
        })
        .collect()
}

fn stencil_offsets(d: usize) -> Vec<Vec<i32>> {
    let count = 3usize.pow(d as u32);
    (0..count)
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as i32 - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i32>| o.iter().any(|v| *v != 0))
        .collect()
}

/// Evaluates `sup_x max_e |A_e(x+y) − A_e(x+z)|` on a window using the
/// complex form `A_e(x) = mean_e + Re Σ_k c_ke e^{iω_k·x}` with
/// `c_ke = cos_ke − i sin_ke`.
struct ShiftProbe {
    modes: usize,
    freq: Vec<Vec<f64>>,
    /// c_ke for the active entries, `[k][e] = (re, im)`
    coef: Vec<Vec<(f64, f64)>>,
    /// e^{iω_k·x} for window points, `[x][k]`
    phases: Vec<Vec<(f64, f64)>>,
    spacing: f64,
}

impl ShiftProbe {
    fn new(field: &TensorField, search: &RhoSearch) -> Self {
        let d = field.d;
        let active: Vec<usize> = (0..field.entry_count())
            .filter(|&e| field.modes.iter().any(|m| m.cos.data[e] != 0.0 || m.sin.data[e] != 0.0))
            .collect();
        // entries with identical mode coefficients give identical differences
        let mut distinct: Vec<usize> = Vec::new();
        for &e in &active {
            let dup = distinct.iter().any(|&f| {
                field
                    .modes
                    .iter()
                    .all(|m| m.cos.data[e] == m.cos.data[f] && m.sin.data[e] == m.sin.data[f])
            });
            if !dup {
                distinct.push(e);
            }
        }
        let freq: Vec<Vec<f64>> = field.modes.iter().map(|m| m.freq.clone()).collect();
        let coef = field
            .modes
            .iter()
            .map(|m| distinct.iter().map(|&e| (m.cos.data[e], -m.sin.data[e])).collect())
            .collect();
        let per_axis = axis_samples(search.window_samples, d);
        let (extent, centered): (Vec<f64>, bool) = match field.period() {
            Some(p) => (p.to_vec(), false),
            None => (vec![2.0 * search.window_radius; d], true),
        };
        let spacing = extent.iter().map(|e| e / per_axis as f64).fold(0.0, f64::max);
        let phases = lattice_points(&extent, per_axis, centered)
            .into_iter()
            .map(|x| {
                freq.iter()
                    .map(|w| {
                        let t: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
                        let (s, c) = t.sin_cos();
                        (c, s)
                    })
                    .collect()
            })
            .collect();
        ShiftProbe {
            modes: field.modes.len(),
            freq,
            coef,
            phases,
            spacing,
        }
    }

    /// Returns the sup-norm distance if it is strictly below `bound`.
    fn distance(&self, y: &[f64], z: &[f64], bound: f64, hot: &mut usize) -> Option<f64> {
        let entries = self.coef.first().map_or(0, |c| c.len());
        // W_ke = c_ke (e^{iω_k·y} − e^{iω_k·z})
        let mut w = Vec::with_capacity(self.modes * entries);
        for k in 0..self.modes {
            let ty: f64 = self.freq[k].iter().zip(y).map(|(a, b)| a * b).sum();
            let tz: f64 = self.freq[k].iter().zip(z).map(|(a, b)| a * b).sum();
            let (sy, cy) = ty.sin_cos();
            let (sz, cz) = tz.sin_cos();
            let (dr, di) = (cy - cz, sy - sz);
            for &(cr, ci) in &self.coef[k] {
                w.push((cr * dr - ci * di, cr * di + ci * dr));
            }
        }
        let eval = |x: usize| -> f64 {
            let ph = &self.phases[x];
            let mut worst: f64 = 0.0;
            for e in 0..entries {
                let mut s = 0.0;
                for k in 0..self.modes {
                    let (wr, wi) = w[k * entries + e];
                    let (pr, pi) = ph[k];
                    s += wr * pr - wi * pi;
                }
                worst = worst.max(s.abs());
            }
            worst
        };
        let first = eval(*hot);
        if first >= bound {
            return None;
        }
        let mut sup = first;
        for x in 0..self.phases.len() {
            let v = eval(x);
            if v > sup {
                sup = v;
                if sup >= bound {
                    *hot = x;
                    return None;
                }
            }
        }
        Some(sup)
    }
}

/// Least-squares fit `ρ(R) ≈ C₀ (log R)^{−N}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DecayFit {
    Fitted { c0: f64, n: f64, residual: f64, points: usize },
    /// All usable entries vanish: the modulus is compactly supported.
    CompactlySupported,
    /// The values are all equal; `N` is undefined.
    Degenerate,
}

/// Uses only entries with `R ≥ 4` and `ρ > 0`; zero entries are skipped.
pub fn decay_fit(table: &RhoTable) -> Result<DecayFit> {
    let usable: Vec<(f64, f64)> = table
        .radii
        .iter()
        .zip(&table.values)
        .filter(|(r, _)| **r >= 4.0)
        .map(|(r, v)| (*r, *v))
        .collect();
    let positive: Vec<(f64, f64)> = usable.iter().copied().filter(|(_, v)| *v > 0.0).collect();
    if positive.len() < 3 {
        if usable.iter().any(|(_, v)| *v == 0.0) {
            return Ok(DecayFit::CompactlySupported);
        }
        return Err(Error::invalid("decay fit needs at least 3 entries with R >= 4"));
    }
    let first = positive[0].1;
    if positive.iter().all(|(_, v)| (v - first).abs() <= 1e-14 * first) {
        return Ok(DecayFit::Degenerate);
    }
    let xs: Vec<f64> = positive.iter().map(|(r, _)| r.ln().ln()).collect();
    let ys: Vec<f64> = positive.iter().map(|(_, v)| v.ln()).collect();
    let (slope, intercept, residual) = least_squares_line(&xs, &ys);
    if !slope.is_finite() {
        return Ok(DecayFit::Degenerate);
    }
    Ok(DecayFit::Fitted {
        c0: intercept.exp(),
        n: -slope,
        residual,
        points: xs.len(),
    })
}

/// Ordinary least squares `y ≈ a x + b`; returns `(a, b, rms residual)`.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}
