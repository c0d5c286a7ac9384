use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::least_squares_line;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniResult {
    pub value: f64,
    pub diverges: bool,
    /// Contribution of `[lower, 10·lower]`.
    pub last_decade: f64,
    /// Contribution of `[10·lower, 100·lower]`.
    pub previous_decade: f64,
    /// Fitted `k` in `integrand ≈ c·s^{−k}`, `s = log(1/t)`, over the last
    /// two decades.
    pub tail_exponent: f64,
}

const PER_DECADE: usize = 2000;

/// `∫_lower^1 [η(t)]^e dt/t` by the trapezoid rule on a log-spaced grid
/// (uniform in `s = log(1/t)`).
///
/// The divergence flag is set when the last decade contributes at least 0.9
/// of the previous one, or when the integrand decays no faster than `1/s`.
/// The second test catches `s^{-1}`-type integrands, whose decade
/// contributions shrink only logarithmically.
pub fn dini_integral(modulus: impl Fn(f64) -> f64, exponent: f64, lower: f64) -> Result<DiniResult> {
    if !(lower > 0.0) {
        return Err(Error::invalid(format!("lower limit must be positive, got {lower}")));
    }
    if !(lower < 1.0) {
        return Err(Error::invalid("lower limit must be below 1"));
    }
    if !(exponent > 0.0) {
        return Err(Error::invalid("exponent must be positive"));
    }
    let s_max = (1.0 / lower).ln();
    let decades = (1.0 / lower).log10();
    let steps = ((decades * PER_DECADE as f64).ceil() as usize).max(PER_DECADE);
    let ds = s_max / steps as f64;
    let f = |s: f64| {
        let v = modulus((-s).exp());
        if v <= 0.0 {
            0.0
        } else {
            v.powf(exponent)
        }
    };
    let values: Vec<f64> = (0..=steps).map(|k| f(k as f64 * ds)).collect();
    let trapezoid = |from: f64, to: f64| -> f64 {
        let a = ((from / ds).round() as usize).min(steps);
        let b = ((to / ds).round() as usize).min(steps);
        (a..b).map(|k| 0.5 * ds * (values[k] + values[k + 1])).sum()
    };
    let value = trapezoid(0.0, s_max);
    let ln10 = 10f64.ln();
    let last_decade = trapezoid((s_max - ln10).max(0.0), s_max);
    let previous_decade = trapezoid((s_max - 2.0 * ln10).max(0.0), (s_max - ln10).max(0.0));

    let tail_start = (s_max - 2.0 * ln10).max(0.5 * s_max);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..=steps)
        .map(|k| (k as f64 * ds, values[k]))
        .filter(|(s, v)| *s >= tail_start && *s > 0.0 && *v > 0.0)
        .map(|(s, v)| (s.ln(), v.ln()))
        .unzip();
    let tail_exponent = if xs.len() >= 3 {
        -least_squares_line(&xs, &ys).0
    } else {
        f64::INFINITY
    };
    let decade_rule = previous_decade > 0.0 && last_decade >= 0.9 * previous_decade;
    let diverges = value > 0.0 && (decade_rule || tail_exponent <= 1.0 + 1e-9);
    Ok(DiniResult {
        value,
        diverges,
        last_decade,
        previous_decade,
        tail_exponent,
    })
}

/// `[log(1/min(t, 1/2))]^{−p}`: a power-of-log modulus, held constant on
/// `[1/2, 1]` so that it stays bounded as `t → 1`.
pub fn log_power_modulus(p: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| (1.0 / t.min(0.5)).ln().powf(-p)
}

/// Closed form of `∫_lower^1 [log_power_modulus(p)]^e dt/t`.
pub fn log_power_integral(p: f64, exponent: f64, lower: f64) -> f64 {
    let k = p * exponent;
    let l2 = 2f64.ln();
    let s = (1.0 / lower).ln();
    let head = l2.powf(-k) * l2;
    if s <= l2 {
        return l2.powf(-k) * s;
    }
    let tail = if (k - 1.0).abs() < 1e-12 {
        (s / l2).ln()
    } else {
        (s.powf(1.0 - k) - l2.powf(1.0 - k)) / (1.0 - k)
    };
    head + tail
}
