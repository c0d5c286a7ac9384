use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RhoTable;

/// Minimum of `ρ(R) + (R/T)^σ` over the scanned radii.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaValue {
    pub value: f64,
    /// The minimizing radius.
    pub radius: f64,
    /// The minimum sits at the scan floor `T·1e-6`, i.e. the true infimum is
    /// smaller (typically `ρ ≡ 0` near the origin).
    pub at_floor: bool,
}

const FLOOR: f64 = 1e-6;
const PER_DECADE: usize = 64;

/// `Θ_σ(T) = inf_{0<R≤T} ρ(R) + (R/T)^σ` for a modulus given as a function,
/// scanned on `extra` radii (those ≤ T) and 64 log-spaced points per decade
/// from `T·1e-6` up to `T`.
pub fn theta_with(rho: impl Fn(f64) -> f64, sigma: f64, t: f64, extra: &[f64]) -> Result<ThetaValue> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::invalid(format!("sigma must lie in (0,1], got {sigma}")));
    }
    if !(t >= 1.0) {
        return Err(Error::invalid(format!("T must be at least 1, got {t}")));
    }
    let decades = (1.0 / FLOOR).log10();
    let steps = (decades * PER_DECADE as f64).round() as usize;
    let floor = t * FLOOR;
    let mut best = ThetaValue {
        value: f64::INFINITY,
        radius: t,
        at_floor: false,
    };
    let objective = |r: f64| rho(r) + (r / t).powf(sigma);
    let scan = (0..=steps)
        .map(|k| floor * 10f64.powf(k as f64 / PER_DECADE as f64))
        .map(|r| r.min(t))
        .chain(extra.iter().copied().filter(|r| *r > 0.0 && *r <= t));
    for r in scan {
        let v = objective(r);
        if v < best.value {
            best = ThetaValue {
                value: v,
                radius: r,
                at_floor: r <= floor * (1.0 + 1e-12),
            };
        }
    }
    if !best.at_floor {
        // golden-section polish between the neighbouring scan points
        let step = 10f64.powf(1.0 / PER_DECADE as f64);
        let (mut a, mut b) = ((best.radius / step).max(floor), (best.radius * step).min(t));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if objective(c) < objective(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let r = 0.5 * (a + b);
        let v = objective(r);
        if v < best.value {
            best.value = v;
            best.radius = r;
        }
    }
    Ok(best)
}

/// [`theta_with`] on a tabulated modulus (step lookup from the left, see
/// [`RhoTable::at`]).
pub fn theta(table: &RhoTable, sigma: f64, t: f64) -> Result<ThetaValue> {
    if table.is_empty() {
        return Err(Error::invalid("empty rho table"));
    }
    theta_with(|r| table.at(r), sigma, t, &table.radii)
}

/// `ρ`, `Θ_σ`, `ω` and the corrector-distance table of one field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusTable {
    pub sigma: f64,
    pub rho: RhoTable,
    /// `(T, ⟨|∇χ_ref − ∇χ_T|⟩)` sorted by `T`.
    pub psi_distance: Vec<(f64, f64)>,
    pub theta_curve: Vec<(f64, f64)>,
    pub omega_curve: Vec<(f64, f64)>,
}

impl ModulusTable {
    pub fn new(sigma: f64, rho: RhoTable, mut psi_distance: Vec<(f64, f64)>) -> Result<Self> {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::invalid(format!("sigma must lie in (0,1], got {sigma}")));
        }
        psi_distance.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(ModulusTable {
            sigma,
            rho,
            psi_distance,
            theta_curve: Vec::new(),
            omega_curve: Vec::new(),
        })
    }

    /// Fills the `Θ_σ` curve on `ts` and the `ω` curve on `epsilons`.
    pub fn tabulate(&mut self, ts: &[f64], epsilons: &[f64]) -> Result<()> {
        self.theta_curve = ts
            .iter()
            .map(|t| Ok((*t, theta(&self.rho, self.sigma, *t)?.value)))
            .collect::<Result<_>>()?;
        self.omega_curve = epsilons
            .iter()
            .map(|e| Ok((*e, omega(self, self.sigma, *e)?)))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// `max_{T ≥ t} ψ-distance` over the table, requiring at least three
    /// tabulated points in range.
    pub fn psi_sup_from(&self, t: f64) -> Result<f64> {
        let tail: Vec<f64> = self
            .psi_distance
            .iter()
            .filter(|(tt, _)| *tt >= t * (1.0 - 1e-9))
            .map(|(_, v)| *v)
            .collect();
        if tail.len() < 3 {
            return Err(Error::invalid(format!(
                "corrector-distance table covers {} points with T >= {t}; extend the corrector sweep to at least 3",
                tail.len()
            )));
        }
        Ok(tail.into_iter().fold(0.0, f64::max))
    }
}

/// `ω(ε) = [Θ₁(1/ε)]^σ + sup_{T ≥ 1/ε} ⟨|ψ − ∇χ_T|⟩` with the sup taken as a
/// running max over the tabulated distances. A `Θ₁` minimum at the scan
/// floor counts as 0 when `ρ` vanishes there.
pub fn omega(moduli: &ModulusTable, sigma: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0,1], got {epsilon}")));
    }
    let t = 1.0 / epsilon;
    let th = theta(&moduli.rho, 1.0, t)?;
    // a minimum at the scan floor means ρ vanishes near 0 and the infimum is 0
    let first = if th.at_floor && moduli.rho.at(th.radius) == 0.0 {
        0.0
    } else {
        th.value.powf(sigma)
    };
    Ok(first + moduli.psi_sup_from(t)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_table() -> RhoTable {
        RhoTable::from_values(vec![1.0, 2.0, 4.0], vec![0.0; 3]).unwrap()
    }

    #[test]
    fn zero_modulus_hits_the_floor() {
        let th = theta(&zero_table(), 0.5, 100.0).unwrap();
        assert!(th.at_floor);
        assert!((th.value - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn periodic_bound() {
        let t = RhoTable::from_values(vec![1.0, 2.0 * std::f64::consts::PI], vec![0.4, 0.0]).unwrap();
        for tt in [10.0, 100.0, 1000.0] {
            let th = theta(&t, 0.7, tt).unwrap();
            assert!(th.value <= (2.0 * std::f64::consts::PI / tt).powf(0.7) + 1e-15);
        }
    }

    #[test]
    fn balanced_minimizer_matches_dense_scan() {
        let rho = |r: f64| (10.0 / r).min(1.0);
        let (sigma, t) = (0.5, 1000.0);
        let th = theta_with(rho, sigma, t, &[]).unwrap();
        let mut best = f64::INFINITY;
        let n = 1_000_000;
        for k in 1..=n {
            let r = t * k as f64 / n as f64;
            best = best.min(rho(r) + (r / t).powf(sigma));
        }
        assert!((th.value - best).abs() < 1e-6, "{} vs {}", th.value, best);
    }

    #[test]
    fn omega_requires_coverage_and_is_monotone() {
        let rho = RhoTable::from_values(vec![1.0, 2.0, 4.0, 8.0], vec![0.5, 0.3, 0.1, 0.05]).unwrap();
        let psi = vec![(8.0, 0.2), (16.0, 0.1), (32.0, 0.05), (64.0, 0.03), (128.0, 0.01)];
        let table = ModulusTable::new(0.9, rho, psi).unwrap();
        assert!(omega(&table, 0.9, 1.0 / 128.0).is_err());
        let eps = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0];
        let w: Vec<f64> = eps.iter().map(|e| omega(&table, 0.9, *e).unwrap()).collect();
        assert!(w[0] <= w[1] && w[1] <= w[2]);
    }
}
