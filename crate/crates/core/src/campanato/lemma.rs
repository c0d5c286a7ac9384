use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two nonnegative sequences `F₀..F_ℓ`, `p₀..p_ℓ` with the weights
/// `η₁..η_ℓ` of the iteration lemma. `eta[0]` holds `η₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaInstance {
    pub f: Vec<f64>,
    pub p: Vec<f64>,
    pub eta: Vec<f64>,
    pub k: f64,
    pub c0: f64,
    pub c1: f64,
}

const SLACK: f64 = 1e-12;

impl LemmaInstance {
    pub fn len(&self) -> usize {
        self.f.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `η_j` for `1 ≤ j ≤ ℓ`.
    pub fn eta_at(&self, j: usize) -> f64 {
        self.eta[j - 1]
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.len();
        if l < 2 || self.p.len() != l + 1 || self.eta.len() != l {
            return Err(Error::invalid("need F, p of length ℓ+1 ≥ 3 and η of length ℓ"));
        }
        let all = self.f.iter().chain(&self.p).chain(&self.eta).chain([&self.k, &self.c0, &self.c1]);
        if all.clone().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("all entries must be finite and nonnegative"));
        }
        if self.eta.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("η must be nondecreasing"));
        }
        if (self.eta[l - 1] - self.eta[l - 2]).abs() > SLACK * self.eta[l - 1].max(1.0) {
            return Err(Error::invalid("η_{ℓ−1} must equal η_ℓ"));
        }
        if self.eta.iter().sum::<f64>() > self.c1 + SLACK {
            return Err(Error::invalid("Σ η exceeds C1"));
        }
        Ok(())
    }

    /// Right side of the `p` hypothesis at step `j → j+1`.
    fn p_bound(&self, j: usize) -> f64 {
        self.p[j] + self.c0 * self.f[j].max(self.f[j + 1])
    }

    /// Right side of the `F` hypothesis at step `j → j+1`, `j ≥ 1`.
    fn f_bound(&self, j: usize) -> f64 {
        let pmax = self.p[..j].iter().copied().fold(0.0, f64::max);
        let fmax = self.f[..j].iter().copied().fold(0.0, f64::max);
        0.5 * self.f[j] + self.eta_at(j) * (self.k + pmax + fmax)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// `p_{j+1} ≤ p_j + C₀ max{F_j, F_{j+1}}`
    Slope,
    /// `F_{j+1} ≤ F_j/2 + η_j (K + max p_{<j} + max F_{<j})`
    Excess,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub hypotheses_ok: bool,
    /// First step `j` (the hypothesis concerns `j → j+1`) that fails.
    pub first_violation: Option<(usize, Hypothesis)>,
    pub conclusions_ok: bool,
    pub witness: f64,
    pub log_witness: f64,
    /// Largest observed `p_j / (K + p₀ + F₀ + F₁)` and
    /// `F_j / ((2^{−j} + η_j)(K + p₀ + F₀ + F₁))`.
    pub slope_ratio: f64,
    pub excess_ratio: f64,
}

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + SLACK * rhs.abs().max(1.0)
}

/// Checks the hypotheses step by step (for each `j`, the slope condition
/// first), then the conclusions against [`lemma_constant`].
pub fn lemma_check(inst: &LemmaInstance) -> Result<LemmaCheck> {
    inst.validate()?;
    let l = inst.len();
    let mut first = None;
    for j in 0..l {
        if exceeds(inst.p[j + 1], inst.p_bound(j)) {
            first = Some((j, Hypothesis::Slope));
            break;
        }
        if j >= 1 && exceeds(inst.f[j + 1], inst.f_bound(j)) {
            first = Some((j, Hypothesis::Excess));
            break;
        }
    }
    let log_witness = lemma_log_constant(inst.c0, inst.c1);
    let base = inst.k + inst.p[0] + inst.f[0] + inst.f[1];
    // v ≤ C·bound compared as ln v ≤ ln C + ln bound, with the usual slack
    let within = |v: f64, bound: f64| v <= 0.0 || (bound > 0.0 && v.ln() <= log_witness + bound.ln() + SLACK);
    let mut slope_ratio: f64 = 0.0;
    let mut excess_ratio: f64 = 0.0;
    let mut ok = true;
    for j in 1..=l {
        let weight = 0.5f64.powi(j as i32) + inst.eta_at(j);
        ok &= within(inst.p[j], base);
        ok &= within(inst.f[j], weight * base);
        if base > 0.0 {
            slope_ratio = slope_ratio.max(inst.p[j] / base);
            excess_ratio = excess_ratio.max(inst.f[j] / (weight * base));
        } else if inst.p[j] > 0.0 || inst.f[j] > 0.0 {
            slope_ratio = f64::INFINITY;
        }
    }
    Ok(LemmaCheck {
        hypotheses_ok: first.is_none(),
        first_violation: first,
        conclusions_ok: ok,
        witness: log_witness.exp(),
        log_witness,
        slope_ratio,
        excess_ratio,
    })
}

/// Constant of the iteration lemma, composed from the proof's chain.
///
/// The halving argument gives `F_j ≤ 2^{1−j}F₁ + 2η_j(max p + max F)`, the
/// induction over `(1 + 2η_i)` products gives `F_j ≤ C₂{(2^{−j} + η_j)S +
/// η_j P_{j−1}}` with `C₂ = 2e^{2C₁}` and `S = F₀ + F₁`. Feeding this into the
/// slope hypothesis with `C₃ = C₀C₂` yields
/// `P_j ≤ e^{C₃C₁}(p₀ + C₃(2 + C₁)S)`, i.e. `C_p = e^{C₃C₁} max(1, C₃(2 + C₁))`,
/// and then `F_j ≤ C₂(1 + C_p)(2^{−j} + η_j)(K + p₀ + S)`. The returned value
/// is `C₂(1 + C_p)`, which dominates `C_p`.
///
/// The value overflows `f64` already for moderate arguments (`(5, 3)` gives
/// about `e^{12102}`); [`lemma_log_constant`] is the overflow-free form.
pub fn lemma_constant(c0: f64, c1: f64) -> f64 {
    lemma_log_constant(c0, c1).exp()
}

/// Natural logarithm of [`lemma_constant`].
pub fn lemma_log_constant(c0: f64, c1: f64) -> f64 {
    let c0 = c0.max(0.0);
    let c1 = c1.max(0.0);
    let log_c2 = 2f64.ln() + 2.0 * c1;
    let c3 = c0 * log_c2.exp();
    let log_cp = c3 * c1 + (c3 * (2.0 + c1)).max(1.0).ln();
    // ln(1 + e^x) without overflow
    let log_one_plus_cp = if log_cp > 30.0 { log_cp + (-log_cp).exp().ln_1p() } else { log_cp.exp().ln_1p() };
    log_c2 + log_one_plus_cp
}

/// How the generator fills the hypotheses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Saturation {
    /// Every hypothesis holds with equality.
    Equality,
    /// Every right side is scaled by an independent factor in `(0, 1)`.
    Strict,
}

/// Draws an instance with `Σ η = C₁` and the recursions filled forward.
pub fn generate_instance(rng: &mut impl Rng, c0: f64, c1: f64, saturation: Saturation) -> LemmaInstance {
    let l = rng.gen_range(6..=40);
    let mut eta: Vec<f64> = (0..l - 1).map(|_| rng.gen::<f64>()).collect();
    eta.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eta.push(eta[l - 2]);
    let total: f64 = eta.iter().sum();
    for e in &mut eta {
        *e = if total > 0.0 { *e * c1 / total } else { 0.0 };
    }
    // the last two must agree exactly after scaling
    eta[l - 1] = eta[l - 2];
    let scale = |rng: &mut dyn rand::RngCore| match saturation {
        Saturation::Equality => 1.0,
        Saturation::Strict => 0.05 + 0.9 * rng.gen::<f64>(),
    };
    let mut inst = LemmaInstance {
        f: vec![0.0; l + 1],
        p: vec![0.0; l + 1],
        eta,
        k: rng.gen::<f64>(),
        c0,
        c1,
    };
    inst.f[0] = rng.gen::<f64>();
    inst.f[1] = rng.gen::<f64>();
    inst.p[0] = rng.gen::<f64>();
    for j in 0..l {
        if j >= 1 {
            inst.f[j + 1] = scale(rng) * inst.f_bound(j);
        }
        inst.p[j + 1] = scale(rng) * inst.p_bound(j);
    }
    inst
}

/// Outcome of [`lemma_fuzz`] for one `(C₀, C₁)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub c0: f64,
    pub c1: f64,
    pub count: usize,
    pub witness: f64,
    pub log_witness: f64,
    pub hypothesis_failures: usize,
    pub conclusion_violations: usize,
    /// Tampered copies (`F₅ × 10`) whose hypothesis failure was detected at `j = 4`.
    pub tamper_detected: usize,
    pub max_slope_ratio: f64,
    pub max_excess_ratio: f64,
}

/// Generates `count` instances per saturation mode from `seed` and checks each,
/// plus a tampered copy of every equality instance.
pub fn lemma_fuzz(c0: f64, c1: f64, count: usize, seed: u64, saturation: Saturation) -> Result<(FuzzSummary, Vec<LemmaInstance>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = FuzzSummary {
        c0,
        c1,
        count,
        witness: lemma_constant(c0, c1),
        log_witness: lemma_log_constant(c0, c1),
        hypothesis_failures: 0,
        conclusion_violations: 0,
        tamper_detected: 0,
        max_slope_ratio: 0.0,
        max_excess_ratio: 0.0,
    };
    let mut corpus = Vec::with_capacity(count);
    for _ in 0..count {
        let inst = generate_instance(&mut rng, c0, c1, saturation);
        let check = lemma_check(&inst)?;
        summary.hypothesis_failures += usize::from(!check.hypotheses_ok);
        summary.conclusion_violations += usize::from(!check.conclusions_ok);
        summary.max_slope_ratio = summary.max_slope_ratio.max(check.slope_ratio);
        summary.max_excess_ratio = summary.max_excess_ratio.max(check.excess_ratio);
        let mut tampered = inst.clone();
        tampered.f[5] *= 10.0;
        let t = lemma_check(&tampered)?;
        if !t.hypotheses_ok && t.first_violation.map(|v| v.0) == Some(4) {
            summary.tamper_detected += 1;
        }
        corpus.push(inst);
    }
    Ok((summary, corpus))
}
