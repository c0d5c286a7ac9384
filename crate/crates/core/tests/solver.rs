use std::f64::consts::PI;
use std::sync::Arc;

use homoglab_core::corrector::solve_cell_corrector;
use homoglab_core::discrete::{lp_norm, mean, Coefficient, GridFunction, SolverSettings};
use homoglab_core::field::{CoefTensor, RhoTable, TensorField};
use homoglab_core::homogenize::{effective_tensor, exact_periodic_cell, two_scale_remainder, EffectiveTensor, ModulusTable};
use homoglab_core::solver::{
    boundary_lipschitz_probe, lipschitz_probe, rate_sweep, solve_bvp, w1p_probe, BoundaryData, BoundaryPatch, BvpSpec, ProbeSetup,
    RateMode, RateSetup, SourceFn,
};

fn tight() -> SolverSettings {
    SolverSettings { tol: 1e-12, max_iter: 200_000 }
}

fn laminate() -> TensorField {
    TensorField::scalar(2, 2.0, &[(vec![1.0, 0.0], 0.0, 1.0)], 1.0, Some(vec![2.0 * PI; 2])).unwrap()
}

fn spec(coefficient: Coefficient, n: usize, bc: BoundaryData, source: Option<SourceFn>) -> BvpSpec {
    let d = coefficient.dim();
    BvpSpec {
        coefficient,
        origin: vec![0.0; d],
        side: vec![1.0; d],
        n: vec![n; d],
        bc,
        source,
        solver: tight(),
        override_resolution: false,
    }
}

fn zero_dirichlet() -> BoundaryData {
    BoundaryData::Dirichlet(Arc::new(|_: &[f64]| vec![0.0]))
}

#[test]
fn manufactured_poisson_converges_at_second_order() {
    let exact = |x: &[f64]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let mut errors = Vec::new();
    for n in [16, 32, 64, 128] {
        let s = spec(
            Coefficient::Constant(CoefTensor::isotropic(2, 1, 1.0)),
            n,
            zero_dirichlet(),
            Some(SourceFn(Arc::new(move |x: &[f64]| vec![2.0 * PI * PI * exact(x)]))),
        );
        let u = solve_bvp(&s).unwrap().u;
        let reference = GridFunction::from_fn(u.grid.clone(), 1, |x, out| out[0] = exact(x));
        errors.push(lp_norm(&u.sub(&reference).unwrap(), 2.0).unwrap());
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() <= 0.8, "refinement ratio {ratio} from {errors:?}");
    }
}

#[test]
fn repeated_solves_are_bit_identical() {
    let s = spec(
        Coefficient::oscillating(&laminate(), 1.0 / 8.0),
        96,
        BoundaryData::Dirichlet(Arc::new(|x: &[f64]| vec![x[0] * x[1]])),
        Some(SourceFn(Arc::new(|x: &[f64]| vec![(3.0 * x[0]).cos()]))),
    );
    let a = solve_bvp(&s).unwrap().u;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| solve_bvp(&s).unwrap().u);
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn discrete_maximum_principle() {
    let data = |x: &[f64]| (2.0 * PI * x[0]).sin() + x[1];
    let s = spec(
        Coefficient::oscillating(&laminate(), 1.0 / 16.0),
        128,
        BoundaryData::Dirichlet(Arc::new(move |x: &[f64]| vec![data(x)])),
        None,
    );
    let u = solve_bvp(&s).unwrap().u;
    let grid = &u.grid;
    let boundary: Vec<f64> = (0..grid.node_count()).filter(|&p| grid.is_boundary_node(p)).map(|p| u.values[p]).collect();
    let lo = boundary.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = boundary.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(u.values.iter().all(|v| *v >= lo - 1e-8 && *v <= hi + 1e-8));
}

#[test]
fn neumann_solutions_have_zero_mean() {
    let s = spec(
        Coefficient::oscillating(&laminate(), 1.0 / 8.0),
        64,
        BoundaryData::Neumann(Arc::new(|_: &[f64], n: &[f64]| vec![n[0] + 2.0 * n[1]])),
        None,
    );
    let u = solve_bvp(&s).unwrap().u;
    let sup = lp_norm(&u, f64::INFINITY).unwrap();
    assert!(sup > 0.1);
    assert!(mean(&u)[0].abs() <= 1e-12 * sup);
}

#[test]
fn fixed_epsilon_self_convergence() {
    let field = laminate();
    let norms: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let s = spec(
                Coefficient::oscillating(&field, 0.25),
                n,
                zero_dirichlet(),
                Some(SourceFn(Arc::new(|x: &[f64]| vec![1.0 + x[0]]))),
            );
            lp_norm(&solve_bvp(&s).unwrap().u, 2.0).unwrap()
        })
        .collect();
    let order = ((norms[0] - norms[1]).abs() / (norms[1] - norms[2]).abs()).log2();
    assert!(order >= 1.8, "observed order {order} from {norms:?}");
}

fn probe_setup(bc: BoundaryData, source: Option<SourceFn>, n: usize) -> ProbeSetup {
    ProbeSetup {
        origin: vec![0.0, 0.0],
        side: vec![1.0, 1.0],
        n: vec![n, n],
        bc,
        source,
        solver: tight(),
        override_resolution: false,
    }
}

#[test]
fn constant_coefficient_probes_do_not_depend_on_epsilon() {
    let field = TensorField::constant(CoefTensor::isotropic(2, 1, 1.5), 1.0).unwrap();
    let eps = [0.125, 0.0625, 0.03125];
    let setup = probe_setup(zero_dirichlet(), Some(SourceFn(Arc::new(|_: &[f64]| vec![1.0]))), 64);
    let lip = lipschitz_probe(&field, &eps, &setup, &[0.3, 0.4], 0.0625).unwrap();
    assert!((lip.max_ratio - 1.0).abs() < 1e-12);
    let w = w1p_probe(&field, &eps, 4.0, &setup, &[0.3, 0.4], 0.0625).unwrap();
    assert!((w.max_ratio - 1.0).abs() < 1e-12);
    let w2 = w1p_probe(&field, &eps, 2.0, &setup, &[0.3, 0.4], 0.0625).unwrap();
    assert!(w2.rows.iter().all(|r| r.ratio.is_finite()));

    let affine = probe_setup(BoundaryData::Dirichlet(Arc::new(|x: &[f64]| vec![0.5 * x[0] - x[1]])), None, 64);
    let patch = BoundaryPatch::lower(1, vec![0.5, 0.0], 0.05);
    let report = boundary_lipschitz_probe(&field, &eps, &affine, &patch).unwrap();
    assert!((report.max_ratio - 1.0).abs() < 1e-9);
    assert!(report.rows.windows(2).all(|w| (w[0].ratio - w[1].ratio).abs() < 1e-9));
}

#[test]
fn probe_region_must_stay_inside() {
    let field = laminate();
    let setup = probe_setup(zero_dirichlet(), None, 64);
    assert!(lipschitz_probe(&field, &[0.125], &setup, &[0.05, 0.5], 0.0625).is_err());
}

fn flat_moduli() -> ModulusTable {
    let rho = RhoTable::from_values(vec![1.0, 2.0 * PI], vec![0.5, 0.0]).unwrap();
    let psi = (3..10).map(|k| (2f64.powi(k), 2f64.powi(-k))).collect();
    ModulusTable::new(0.9, rho, psi).unwrap()
}

#[test]
fn rate_sweep_reports_and_skips() {
    let field = laminate();
    let effective = exact_periodic_cell(&field, 64, tight()).unwrap();
    let setup = RateSetup {
        origin: vec![0.0, 0.0],
        side: vec![1.0, 1.0],
        n: vec![64, 64],
        bc: zero_dirichlet(),
        source: Some(SourceFn(Arc::new(|_: &[f64]| vec![1.0]))),
        solver: tight(),
        sigma: 0.9,
        override_resolution: false,
    };
    // h = 1/64 resolves ε only down to 8h/(2π) ≈ 0.02
    let report = rate_sweep(&field, &[0.125, 0.015625], RateMode::Dirichlet, &setup, &effective, &flat_moduli()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.skipped, vec![0.015625]);
    assert!(report.slope.is_none());
    assert!(rate_sweep(&field, &[0.125], RateMode::Neumann, &setup, &effective, &flat_moduli()).is_err());
}

#[test]
fn constant_coefficient_rate_is_degenerate() {
    let a = CoefTensor::isotropic(2, 1, 2.0);
    let field = TensorField::constant(a.clone(), 1.0).unwrap();
    let setup = RateSetup {
        origin: vec![0.0, 0.0],
        side: vec![1.0, 1.0],
        n: vec![32, 32],
        bc: BoundaryData::Neumann(Arc::new(|_: &[f64], n: &[f64]| vec![n[0]])),
        source: None,
        solver: tight(),
        sigma: 0.9,
        override_resolution: false,
    };
    let eps = [0.125, 0.0625, 0.03125, 0.015625];
    let report = rate_sweep(&field, &eps, RateMode::Neumann, &setup, &EffectiveTensor::given(a), &flat_moduli()).unwrap();
    assert!(report.degenerate);
    assert!(report.rows.iter().all(|r| r.l2_error <= 2.0 * tight().tol));
}

#[test]
fn two_scale_expansion_beats_the_plain_homogenized_solution() {
    let field = TensorField::scalar(1, 2.0, &[(vec![1.0], 0.0, 1.0)], 1.0, Some(vec![2.0 * PI])).unwrap();
    let eps = 1.0 / 32.0;
    let n = 64 * 32;
    let bc = || zero_dirichlet();
    let source = || Some(SourceFn(Arc::new(|_: &[f64]| vec![1.0])));
    // on a 2048-node line the residual bottoms out near 2e-9
    let fine = SolverSettings { tol: 1e-8, ..tight() };
    let solve = |c: Coefficient| {
        let mut s = spec(c, n, bc(), source());
        s.solver = fine;
        solve_bvp(&s).unwrap().u
    };
    let u = solve(Coefficient::oscillating(&field, eps));
    let cs = solve_cell_corrector(&field, 1024, fine).unwrap();
    let effective = effective_tensor(&cs);
    let v0 = solve(Coefficient::Constant(effective.tensor.clone()));
    let rem = two_scale_remainder(&u, &v0, &cs, eps).unwrap();
    assert!(rem.h1 <= 0.2 * rem.baseline_h1, "remainder {} vs baseline {}", rem.h1, rem.baseline_h1);
}
