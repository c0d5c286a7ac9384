use std::collections::VecDeque;
use std::f64::consts::SQRT_2;

use homoglab_core::field::{decay_fit, rho, rho_table, DecayFit, RhoSearch, TensorField};

fn quasiperiodic() -> TensorField {
    TensorField::scalar(1, 2.0, &[(vec![1.0], 0.0, 0.5), (vec![SQRT_2], 0.0, 0.5)], 0.5, None).unwrap()
}

/// For this field `sup_x |a(x+y) − a(x+z)| = |sin(δ/2)| + |sin(δ/√2)|` with
/// `δ = y − z` (the two frequencies are incommensurate, so both cosines peak
/// together somewhere). The modulus is then a sliding-window minimum of that
/// profile, maximized over `y ∈ [0, 200]`.
fn rho_oracle(radius: f64) -> f64 {
    let step = 1e-3;
    let profile = |delta: f64| (delta / 2.0).sin().abs() + (delta / SQRT_2).sin().abs();
    let lo = -radius;
    let hi = 200.0 + radius;
    let count = ((hi - lo) / step).round() as usize + 1;
    let values: Vec<f64> = (0..count).map(|k| profile(lo + k as f64 * step)).collect();
    let width = (2.0 * radius / step).round() as usize + 1;
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut best: f64 = 0.0;
    for k in 0..count {
        while window.back().is_some_and(|&b| values[b] >= values[k]) {
            window.pop_back();
        }
        window.push_back(k);
        if window[0] + width <= k {
            window.pop_front();
        }
        if k + 1 >= width {
            best = best.max(values[window[0]]);
        }
    }
    best
}

#[test]
fn quasiperiodic_modulus_matches_brute_force() {
    let oracle = rho_oracle(4.0);
    let est = rho(&quasiperiodic(), 4.0, &RhoSearch::default()).unwrap();
    assert!(oracle > 0.0);
    assert!(
        oracle >= est.lower - 1e-9 && (est.value - oracle).abs() <= 0.05,
        "rho(4) = {} [{}, {}], oracle {oracle}",
        est.value,
        est.lower,
        est.upper
    );
}

#[test]
fn modulus_is_translation_invariant() {
    let field = quasiperiodic();
    let search = RhoSearch::default();
    for shift in [0.37, 13.0] {
        let moved = field.shifted(&[shift]);
        for r in [2.0, 8.0] {
            let a = rho(&field, r, &search).unwrap();
            let b = rho(&moved, r, &search).unwrap();
            let slack = (a.upper - a.lower).max(b.upper - b.lower) + 0.02;
            assert!((a.value - b.value).abs() <= slack, "shift {shift}, R={r}: {} vs {}", a.value, b.value);
        }
    }
}

#[test]
fn decay_exponent_is_stable_under_refinement() {
    let field = quasiperiodic();
    let radii = [4.0, 8.0, 16.0, 32.0, 64.0];
    let search = RhoSearch::default();
    let coarse = decay_fit(&rho_table(&field, &radii, &search).unwrap()).unwrap();
    let fine = decay_fit(&rho_table(&field, &radii, &search.refined()).unwrap()).unwrap();
    match (coarse, fine) {
        (DecayFit::Fitted { n: a, .. }, DecayFit::Fitted { n: b, .. }) => {
            assert!((a - b).abs() <= 0.1 * b.abs(), "N = {a} then {b}");
        }
        other => panic!("unexpected fits {other:?}"),
    }
}
