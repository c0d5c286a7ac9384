use std::sync::Arc;

use homoglab_core::campanato::{
    affine_excess, affine_objective, flatness_profile, improvement_step_audit, lemma_check, lemma_fuzz, Saturation,
};
use homoglab_core::discrete::{Coefficient, Grid, GridFunction, SolverSettings};
use homoglab_core::field::{CoefTensor, TensorField};
use homoglab_core::homogenize::{exact_periodic_cell, EffectiveTensor};
use homoglab_core::solver::{solve_bvp, BoundaryData, BvpSpec, SourceFn};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(n: usize) -> Grid {
    Grid::rectangle(&[-1.0, -1.0], &[2.0, 2.0], &[n, n]).unwrap()
}

fn random_function(grid: Grid, m: usize, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.node_count() * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    GridFunction::new(grid, m, values).unwrap()
}

fn plus_affine(u: &GridFunction, slope: &[f64], offset: &[f64]) -> GridFunction {
    let d = u.grid.dim();
    let m = u.components;
    let mut out = u.clone();
    for p in 0..u.grid.node_count() {
        let x = u.grid.point(p);
        for c in 0..m {
            out.values[p * m + c] += offset[c] + (0..d).map(|k| slope[c * d + k] * x[k]).sum::<f64>();
        }
    }
    out
}

#[test]
fn least_squares_fit_is_the_global_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (case, m) in [(0u64, 1usize), (1, 2), (2, 1)] {
        let u = random_function(square(24), m, 100 + case);
        let center = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
        let r = 0.5;
        let fit = affine_excess(&u, &center, r).unwrap();
        let best = affine_objective(&u, &center, r, &fit.slope, &fit.offset).unwrap();
        assert!((best.sqrt() / r - fit.excess).abs() < 1e-12);
        for _ in 0..1000 {
            let scale = 10f64.powi(rng.gen_range(-6..0));
            let slope: Vec<f64> = fit.slope.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
            let offset: Vec<f64> = fit.offset.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
            let value = affine_objective(&u, &center, r, &slope, &offset).unwrap();
            assert!(value >= best * (1.0 - 1e-12), "probe decreased the objective: {value} < {best}");
        }
    }
}

#[test]
fn affine_field_has_flat_profile() {
    let slope = [0.7, -1.3];
    let u = plus_affine(&GridFunction::zeros(square(256), 1), &slope, &[0.25]);
    let profile = flatness_profile(&u, &[0.0, 0.0], 0.01, 0.125, 0.0).unwrap();
    assert!(profile.scales.len() >= 2);
    let norm = (slope[0] * slope[0] + slope[1] * slope[1]).sqrt();
    for s in &profile.scales {
        assert!(s.excess < 1e-12, "F_{} = {}", s.j, s.excess);
        assert!((s.slope_norm - norm).abs() < 1e-10);
    }
}

#[test]
fn noise_bounds_the_excess() {
    for amplitude in [1e-3, 1e-6] {
        let noise = random_function(square(256), 1, 5);
        let mut u = plus_affine(&noise, &[2.0, -1.0], &[0.5]);
        // rescale the noise part to the requested amplitude
        for (v, n) in u.values.iter_mut().zip(&noise.values) {
            *v -= n * (1.0 - amplitude);
        }
        let profile = flatness_profile(&u, &[0.1, -0.2], 0.01, 0.125, 0.0).unwrap();
        for s in &profile.scales {
            assert!(s.excess <= amplitude / s.r, "F_{} = {} above {}", s.j, s.excess, amplitude / s.r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adding_an_affine_map_shifts_the_slope_only(
        seed in 0u64..1000,
        s0 in -5.0f64..5.0,
        s1 in -5.0f64..5.0,
        q in -5.0f64..5.0,
    ) {
        let u = random_function(square(64), 1, seed);
        let shifted = plus_affine(&u, &[s0, s1], &[q]);
        let center = [0.05, -0.1];
        let a = flatness_profile(&u, &center, 0.02, 0.125, 0.0).unwrap();
        let b = flatness_profile(&shifted, &center, 0.02, 0.125, 0.0).unwrap();
        prop_assert_eq!(a.scales.len(), b.scales.len());
        for (x, y) in a.scales.iter().zip(&b.scales) {
            prop_assert!((x.excess - y.excess).abs() <= 1e-12 * (1.0 + x.excess));
            prop_assert!((y.slope[0] - x.slope[0] - s0).abs() <= 1e-10);
            prop_assert!((y.slope[1] - x.slope[1] - s1).abs() <= 1e-10);
        }
    }

    #[test]
    fn excess_is_nonnegative_and_scales_with_u(seed in 0u64..1000, factor in 0.1f64..10.0) {
        let u = random_function(square(32), 2, seed);
        let mut v = u.clone();
        v.values.iter_mut().for_each(|x| *x *= factor);
        let a = affine_excess(&u, &[0.0, 0.0], 0.6).unwrap();
        let b = affine_excess(&v, &[0.0, 0.0], 0.6).unwrap();
        prop_assert!(a.excess >= 0.0);
        prop_assert!((b.excess - factor * a.excess).abs() <= 1e-10 * (1.0 + b.excess));
    }
}

#[test]
fn sub_equality_instances_never_violate() {
    for (c0, c1) in [(1.0, 1.0), (2.0, 0.5), (5.0, 3.0)] {
        let (summary, instances) = lemma_fuzz(c0, c1, 1000, 17, Saturation::Strict).unwrap();
        assert_eq!(summary.hypothesis_failures, 0);
        assert_eq!(summary.conclusion_violations, 0);
        for inst in instances.iter().take(50) {
            let check = lemma_check(inst).unwrap();
            assert!(check.hypotheses_ok && check.conclusions_ok);
        }
    }
}

#[test]
fn fuzzing_is_reproducible() {
    let (a, ia) = lemma_fuzz(2.0, 0.5, 200, 7, Saturation::Equality).unwrap();
    let (b, ib) = lemma_fuzz(2.0, 0.5, 200, 7, Saturation::Equality).unwrap();
    assert_eq!(a, b);
    assert_eq!(ia, ib);
}

fn unit_square_spec(coefficient: Coefficient, n: usize) -> BvpSpec {
    BvpSpec {
        coefficient,
        origin: vec![0.0, 0.0],
        side: vec![1.0, 1.0],
        n: vec![n, n],
        bc: BoundaryData::Dirichlet(Arc::new(|x: &[f64]| vec![(x[0] * 2.0).sin() * x[1]])),
        source: Some(SourceFn(Arc::new(|_: &[f64]| vec![1.0]))),
        solver: SolverSettings { tol: 1e-13, max_iter: 100_000 },
        override_resolution: false,
    }
}

#[test]
fn constant_coefficient_audit_reproduces_the_solution() {
    let mut a = CoefTensor::isotropic(2, 1, 1.5);
    a.set(0, 1, 0, 0, 0.3);
    a.set(1, 0, 0, 0, 0.3);
    // the source-free problem, so that w and u solve the same discrete equation
    let mut spec = unit_square_spec(Coefficient::Constant(a.clone()), 64);
    spec.source = None;
    let u = solve_bvp(&spec).unwrap().u;
    let solver = SolverSettings { tol: 1e-13, max_iter: 100_000 };
    let audit = improvement_step_audit(&u, &[0.5, 0.5], 0.2, 0.125, &EffectiveTensor::given(a), solver).unwrap();
    assert!(audit.approx_error <= 1e-8, "approx error {}", audit.approx_error);
    assert!(audit.contraction <= 0.5, "contraction {}", audit.contraction);
}

#[test]
fn laminate_audit_improves_as_epsilon_shrinks() {
    let field = TensorField::scalar(2, 2.0, &[(vec![1.0, 0.0], 0.0, 1.0)], 1.0, Some(vec![2.0 * std::f64::consts::PI; 2])).unwrap();
    let solver = SolverSettings { tol: 1e-11, max_iter: 100_000 };
    let effective = exact_periodic_cell(&field, 128, solver).unwrap();
    let mut errors = Vec::new();
    for eps in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let mut spec = unit_square_spec(Coefficient::oscillating(&field, eps), 256);
        spec.solver = solver;
        // w solves the source-free homogenized problem, so u must too
        spec.source = None;
        let u = solve_bvp(&spec).unwrap().u;
        let audit = improvement_step_audit(&u, &[0.5, 0.5], 0.25, 0.125, &effective, solver).unwrap();
        errors.push(audit.approx_error);
    }
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "approx errors {errors:?}");
}
