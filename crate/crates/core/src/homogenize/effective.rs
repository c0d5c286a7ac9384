use serde::{Deserialize, Serialize};

use crate::corrector::{solve_cell_corrector, CorrectorSet};
use crate::discrete::{mean, node_fluxes, GridFunction, SolverSettings};
use crate::error::{Error, Result};
use crate::field::{CoefTensor, TensorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectiveMethod {
    ApproximateCorrector,
    ExactPeriodicCell,
    /// Supplied directly (constant-coefficient problems).
    Given,
}

/// Homogenized tensor entries with the discretization they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    pub tensor: CoefTensor,
    /// Corrector parameter; `None` for the exact cell problem.
    pub t: Option<f64>,
    pub h: Vec<f64>,
    pub box_side: Vec<f64>,
    pub method: EffectiveMethod,
}

impl EffectiveTensor {
    pub fn given(tensor: CoefTensor) -> Self {
        EffectiveTensor {
            tensor,
            t: None,
            h: Vec::new(),
            box_side: Vec::new(),
            method: EffectiveMethod::Given,
        }
    }

    pub fn get(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.tensor.get(i, j, a, b)
    }

    /// Smallest eigenvalue of the symmetric part of `Â` on `R^{m×d}`.
    pub fn min_symmetric_eigenvalue(&self) -> f64 {
        let a = self.tensor.to_matrix();
        let sym = (&a + a.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    /// `ξ·Â_sym ξ ≥ μ(1 − 0.05)` for all unit `ξ`.
    pub fn is_elliptic(&self, mu: f64) -> bool {
        self.min_symmetric_eigenvalue() >= mu * 0.95
    }

    pub fn max_abs_diff(&self, other: &CoefTensor) -> f64 {
        self.tensor
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// `Â = ⟨A⟩ + ⟨A∇χ_T⟩`, computed as the box mean of the discrete flux
/// `A(e_j^β + ∇χ_{T,j}^β)` so that it is consistent with the discrete
/// corrector equation.
pub fn effective_tensor(cs: &CorrectorSet) -> EffectiveTensor {
    let d = cs.dim();
    let m = cs.components();
    let coef = cs.coefficient();
    let mut tensor = CoefTensor::zeros(d, m);
    for j in 0..d {
        for beta in 0..m {
            let mut g = vec![0.0; m * d];
            g[beta * d + j] = 1.0;
            let flux = node_fluxes(&coef, &cs.grid, Some(&cs.column(j, beta).values), &g);
            let avg = mean(&flux);
            for i in 0..d {
                for alpha in 0..m {
                    tensor.set(i, j, alpha, beta, avg[alpha * d + i]);
                }
            }
        }
    }
    EffectiveTensor {
        tensor,
        t: cs.t.is_finite().then_some(cs.t),
        h: (0..d).map(|k| cs.grid.h(k)).collect(),
        box_side: cs.grid.side().to_vec(),
        method: if cs.t.is_finite() {
            EffectiveMethod::ApproximateCorrector
        } else {
            EffectiveMethod::ExactPeriodicCell
        },
    }
}

/// `Â` from the `T = ∞` cell problem on one period.
pub fn exact_periodic_cell(field: &TensorField, n: usize, solver: SolverSettings) -> Result<EffectiveTensor> {
    if field.period().is_none() {
        return Err(Error::invalid("exact cell problem needs a period lattice"));
    }
    let cs = solve_cell_corrector(field, n, solver)?;
    Ok(effective_tensor(&cs))
}

/// Pointwise `B_T = Â − A − A∇χ_T` on the corrector grid and its box mean.
#[derive(Clone, Debug)]
pub struct BMatrix {
    /// Components indexed as [`CoefTensor::index`].
    pub values: GridFunction,
    pub mean: CoefTensor,
}

pub fn b_matrix(cs: &CorrectorSet, effective: &EffectiveTensor) -> Result<BMatrix> {
    let d = cs.dim();
    let m = cs.components();
    if effective.tensor.dim() != d || effective.tensor.components() != m {
        return Err(Error::GridMismatch("effective tensor and corrector set differ in shape".into()));
    }
    let coef = cs.coefficient();
    let nodes = cs.grid.node_count();
    let ne = d * d * m * m;
    let mut values = vec![0.0; nodes * ne];
    for j in 0..d {
        for beta in 0..m {
            let mut g = vec![0.0; m * d];
            g[beta * d + j] = 1.0;
            let flux = node_fluxes(&coef, &cs.grid, Some(&cs.column(j, beta).values), &g);
            for p in 0..nodes {
                for i in 0..d {
                    for alpha in 0..m {
                        let e = CoefTensor::index(d, m, i, j, alpha, beta);
                        values[p * ne + e] = effective.tensor.as_slice()[e] - flux.values[p * m * d + alpha * d + i];
                    }
                }
            }
        }
    }
    let values = GridFunction::new(cs.grid.clone(), ne, values)?;
    let mean = CoefTensor::from_vec(d, m, mean(&values))?;
    Ok(BMatrix { values, mean })
}
