//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run a subset with `cargo test -p homoglab --test acceptance -- 2 3`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use homoglab::{execute, Artifacts, Command, Config, RunOptions};
use homoglab_core::corrector::{solve_corrector, CorrectorOptions};
use homoglab_core::discrete::{Coefficient, SolverSettings};
use homoglab_core::field::{rho_table, CoefTensor, RhoSearch, RhoTable, TensorField};
use homoglab_core::homogenize::{dini_integral, effective_tensor, exact_periodic_cell, log_power_integral, log_power_modulus, EffectiveTensor, ModulusTable};
use homoglab_core::solver::{rate_sweep, solve_bvp, BoundaryData, BvpSpec, RateMode, RateSetup, SourceFn};

const DIRICHLET: &str = include_str!("../../../configs/laminate_dirichlet.cfg");
const NEUMANN: &str = include_str!("../../../configs/laminate_neumann.cfg");
const QUASIPERIODIC: &str = include_str!("../../../configs/quasiperiodic_1d.cfg");

const EPSILONS: [f64; 4] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        Verdict::new(false, detail)
    }
}

fn tight() -> SolverSettings {
    SolverSettings { tol: 1e-12, max_iter: 200_000 }
}

fn pipeline(text: &str, cmd: Command, opts: &RunOptions) -> Result<Artifacts, String> {
    let cfg = Config::parse(text).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    execute(&cfg, cmd, opts, dir.path()).map_err(|e| format!("{} failed: {e}", cmd.name()))
}

fn detail_f64(art: &Artifacts, key: &str) -> f64 {
    art.details.get(key).and_then(|v| v.as_f64()).unwrap_or(f64::NAN)
}

fn flags(art: &Artifacts) -> String {
    art.pass.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn constant_coefficients() -> Verdict {
    let start = Instant::now();
    let mut a = CoefTensor::zeros(2, 1);
    a.set(0, 0, 0, 0, 2.0);
    a.set(0, 1, 0, 0, 0.4);
    a.set(1, 0, 0, 0, -0.2);
    a.set(1, 1, 0, 0, 1.5);
    let field = match TensorField::constant(a.clone(), 1.0) {
        Ok(f) => f,
        Err(e) => return Verdict::fail(e.to_string()),
    };
    let run = || -> homoglab_core::Result<(f64, f64, f64, f64, bool)> {
        let mut chi_max: f64 = 0.0;
        let mut tensor_err: f64 = 0.0;
        for t in [4.0, 16.0] {
            let mut opts = CorrectorOptions::new(32);
            opts.solver = tight();
            let cs = solve_corrector(&field, t, &opts)?;
            chi_max = cs.chi.iter().map(|c| c.max_abs()).fold(chi_max, f64::max);
            tensor_err = tensor_err.max(effective_tensor(&cs).max_abs_diff(&a));
        }
        let radii = [0.5, 1.0, 2.0, 4.0];
        let rho = rho_table(&field, &radii, &RhoSearch::default())?;
        let rho_max = rho.values.iter().copied().fold(0.0, f64::max);

        let solver = SolverSettings { tol: 1e-10, max_iter: 100_000 };
        let setup = RateSetup {
            origin: vec![0.0, 0.0],
            side: vec![1.0, 1.0],
            n: vec![64, 64],
            bc: BoundaryData::Dirichlet(Arc::new(|x: &[f64]| vec![x[0] * x[1]])),
            source: Some(SourceFn(Arc::new(|_: &[f64]| vec![1.0]))),
            solver,
            sigma: 0.9,
            override_resolution: false,
        };
        let moduli = ModulusTable::new(
            0.9,
            RhoTable::from_values(radii.to_vec(), vec![0.0; 4])?,
            (3..9).map(|k| (2f64.powi(k), 0.0)).collect(),
        )?;
        let report = rate_sweep(&field, &EPSILONS, RateMode::Dirichlet, &setup, &EffectiveTensor::given(a.clone()), &moduli)?;
        let err_max = report.rows.iter().map(|r| r.l2_error).fold(0.0, f64::max);
        Ok((chi_max, tensor_err, rho_max, err_max, report.rows.len() == EPSILONS.len()))
    };
    match run() {
        Ok((chi, ten, rho, err, all_rows)) => {
            let elapsed = start.elapsed();
            let pass = chi <= 1e-10 && ten <= 1e-10 && rho == 0.0 && err <= 2.0 * 1e-10 && all_rows && within(elapsed, 10.0);
            Verdict::new(
                pass,
                format!(
                    "max|chi| {chi:.1e} <= 1e-10, |A_hat - A| {ten:.1e} <= 1e-10, max rho {rho:e} == 0, max rate error {err:.1e} <= 2e-10, {:.1} s < 10 s",
                    elapsed.as_secs_f64()
                ),
            )
        }
        Err(e) => Verdict::fail(e.to_string()),
    }
}

/// `∫_0^x 1/a(s/ε) ds` at every node `k·h`, by composite Simpson with 16
/// panels per grid cell.
fn cumulative_inverse(eps: f64, n: usize) -> Vec<f64> {
    let inv = |s: f64| 1.0 / (2.0 + (s / eps).sin());
    let h = 1.0 / n as f64;
    let panels = 16;
    let q = h / panels as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..n {
        let x0 = k as f64 * h;
        let cell: f64 = (0..panels)
            .map(|p| {
                let a = x0 + p as f64 * q;
                q / 6.0 * (inv(a) + 4.0 * inv(a + q / 2.0) + inv(a + q))
            })
            .sum();
        acc += cell;
        out.push(acc);
    }
    out
}

fn one_dimensional() -> Verdict {
    let start = Instant::now();
    let run = || -> homoglab_core::Result<(f64, f64, f64)> {
        let field = TensorField::scalar(1, 2.0, &[(vec![1.0], 0.0, 1.0)], 1.0, Some(vec![2.0 * PI]))?;
        // relative residuals of these 1D systems bottom out near 1e-16·κ,
        // a few 1e-9 at n = 8192
        let fine = SolverSettings { tol: 1e-8, max_iter: 200_000 };
        let mut opts = CorrectorOptions::new(8192);
        opts.solver = fine;
        let approx = effective_tensor(&solve_corrector(&field, 512.0, &opts)?).get(0, 0, 0, 0);
        let exact = exact_periodic_cell(&field, 4096, fine)?.get(0, 0, 0, 0);
        let target = 3f64.sqrt();

        let mut worst: f64 = 0.0;
        for eps in EPSILONS {
            let n = (128.0 / eps).round() as usize;
            let spec = BvpSpec {
                coefficient: Coefficient::oscillating(&field, eps),
                origin: vec![0.0],
                side: vec![1.0],
                n: vec![n],
                bc: BoundaryData::Dirichlet(Arc::new(|x: &[f64]| vec![x[0]])),
                source: None,
                solver: SolverSettings { tol: 1e-10, max_iter: 200_000 },
                override_resolution: false,
            };
            let u = solve_bvp(&spec)?.u;
            let oracle = cumulative_inverse(eps, n);
            let total = oracle[n];
            for (k, v) in u.values.iter().enumerate() {
                worst = worst.max((v - oracle[k] / total).abs());
            }
        }
        Ok(((approx - target).abs(), (exact - target).abs(), worst))
    };
    match run() {
        Ok((approx, exact, worst)) => {
            let elapsed = start.elapsed();
            let pass = approx <= 1e-4 && exact <= 1e-6 && worst <= 1e-6 && within(elapsed, 60.0);
            Verdict::new(
                pass,
                format!(
                    "|a_T - sqrt3| {approx:.1e} <= 1e-4, |a_cell - sqrt3| {exact:.1e} <= 1e-6, max|u - quadrature| {worst:.1e} <= 1e-6, {:.1} s < 60 s",
                    elapsed.as_secs_f64()
                ),
            )
        }
        Err(e) => Verdict::fail(e.to_string()),
    }
}

fn laminate_cell() -> Verdict {
    let start = Instant::now();
    let run = || -> homoglab_core::Result<(f64, f64, f64)> {
        let field = TensorField::scalar(2, 2.0, &[(vec![1.0, 0.0], 0.0, 1.0)], 1.0, Some(vec![2.0 * PI; 2]))?;
        let mut target = CoefTensor::zeros(2, 1);
        target.set(0, 0, 0, 0, 3f64.sqrt());
        target.set(1, 1, 0, 0, 2.0);
        // at 512² the rounding floor of the residual sits near 3e-12
        let settings = SolverSettings { tol: 1e-10, ..tight() };
        let err = exact_periodic_cell(&field, 512, settings)?.max_abs_diff(&target);
        // self-convergence: successive differences on n, 2n, 4n
        let coarse: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| Ok(exact_periodic_cell(&field, n, tight())?.get(0, 0, 0, 0)))
            .collect::<homoglab_core::Result<_>>()?;
        let order = ((coarse[0] - coarse[1]).abs() / (coarse[1] - coarse[2]).abs()).log2();
        let floor = (coarse[1] - coarse[2]).abs();
        Ok((err, order, floor))
    };
    match run() {
        Ok((err, order, floor)) => {
            let elapsed = start.elapsed();
            let pass = err <= 1e-3 && order >= 1.8 && within(elapsed, 300.0);
            Verdict::new(
                pass,
                format!(
                    "|A_hat - diag(sqrt3, 2)| {err:.1e} <= 1e-3, Richardson order {order:.2} >= 1.8 (finest difference {floor:.1e}), {:.1} s < 300 s",
                    elapsed.as_secs_f64()
                ),
            )
        }
        Err(e) => Verdict::fail(e.to_string()),
    }
}

fn dirichlet_rate() -> Verdict {
    let start = Instant::now();
    match pipeline(DIRICHLET, Command::Rate, &RunOptions::default()) {
        Ok(art) => {
            let elapsed = start.elapsed();
            let slope = detail_f64(&art, "slope");
            let spread = detail_f64(&art, "ratio_spread");
            let pass = slope >= 0.6 && spread <= 4.0 && art.passed() && within(elapsed, 600.0);
            Verdict::new(
                pass,
                format!("slope {slope:.3} >= 0.6, ratio spread {spread:.2} <= 4, {:.1} s < 600 s", elapsed.as_secs_f64()),
            )
        }
        Err(e) => Verdict::fail(e),
    }
}

fn neumann_rate() -> Verdict {
    let start = Instant::now();
    match pipeline(NEUMANN, Command::Rate, &RunOptions::default()) {
        Ok(art) => {
            let spread = detail_f64(&art, "ratio_spread");
            let monotone = art.pass.get("monotone").copied().unwrap_or(false);
            let pass = monotone && spread <= 4.0 && art.passed();
            Verdict::new(
                pass,
                format!("errors decreasing: {monotone}, ratio spread {spread:.2} <= 4, {:.1} s", start.elapsed().as_secs_f64()),
            )
        }
        Err(e) => Verdict::fail(e),
    }
}

fn uniform_lipschitz() -> Verdict {
    let start = Instant::now();
    let runs = [
        ("interior", DIRICHLET, Command::Lipschitz),
        ("boundary dirichlet", DIRICHLET, Command::Boundary),
        ("boundary neumann", NEUMANN, Command::Boundary),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, text, cmd) in runs {
        match pipeline(text, cmd, &RunOptions::default()) {
            Ok(art) => {
                let ratio = detail_f64(&art, "max_ratio");
                pass &= ratio <= 3.0;
                parts.push(format!("{label} max ratio {ratio:.2} <= 3"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    Verdict::new(pass, format!("{}, {:.1} s", parts.join(", "), start.elapsed().as_secs_f64()))
}

fn corrector_bounds() -> Verdict {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, text) in [("quasi-periodic", QUASIPERIODIC), ("laminate", DIRICHLET)] {
        match pipeline(text, Command::Corrector, &RunOptions::default()) {
            Ok(art) => {
                let energy = art.pass.get("energy_within_bound").copied().unwrap_or(false);
                if label == "laminate" {
                    pass &= energy;
                    parts.push(format!("{label} energy_within_bound={energy}"));
                } else {
                    pass &= art.passed();
                    parts.push(format!("{label} {}", flags(&art)));
                }
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    Verdict::new(pass, format!("{}, {:.1} s", parts.join(", "), start.elapsed().as_secs_f64()))
}

fn lemma_fuzzing() -> Verdict {
    let start = Instant::now();
    let opts = RunOptions {
        count: Some(1000),
        ..RunOptions::default()
    };
    match pipeline(DIRICHLET, Command::LemmaFuzz, &opts) {
        Ok(art) => {
            let elapsed = start.elapsed();
            let pass = art.passed() && within(elapsed, 10.0);
            Verdict::new(pass, format!("{}, {:.2} s < 10 s", flags(&art), elapsed.as_secs_f64()))
        }
        Err(e) => Verdict::fail(e),
    }
}

fn flatness_decay() -> Verdict {
    let start = Instant::now();
    match pipeline(DIRICHLET, Command::Flatness, &RunOptions::default()) {
        Ok(art) => {
            let contraction = detail_f64(&art, "homogenized_contraction");
            let spread = detail_f64(&art, "excess_spread");
            let pass = contraction <= 0.5 && spread <= 3.0 && art.passed();
            Verdict::new(
                pass,
                format!(
                    "homogenized contraction {contraction:.3} <= 0.5, excess constant spread {spread:.2} <= 3, {:.1} s",
                    start.elapsed().as_secs_f64()
                ),
            )
        }
        Err(e) => Verdict::fail(e),
    }
}

fn dini() -> Verdict {
    let lower = 1e-6;
    let exponent = 2.0 / 3.0 - 0.05;
    let run = || -> homoglab_core::Result<Verdict> {
        let conv = dini_integral(log_power_modulus(2.6), exponent, lower)?;
        let div = dini_integral(log_power_modulus(1.0), 1.0, lower)?;
        let mut rel: f64 = 0.0;
        for (p, e) in [(2.6, exponent), (1.0, 1.0), (4.0, 1.0), (1.6, 0.5)] {
            for lo in [1e-4, 1e-6, 1e-9] {
                let exact = log_power_integral(p, e, lo);
                let got = dini_integral(log_power_modulus(p), e, lo)?.value;
                rel = rel.max((got - exact).abs() / exact);
            }
        }
        let pass = !conv.diverges && div.diverges && rel <= 0.01;
        Ok(Verdict::new(
            pass,
            format!(
                "N=2.6 converges: {}, N=1 exponent 1 flagged: {}, max relative error vs closed form {rel:.1e} <= 1e-2",
                !conv.diverges, div.diverges
            ),
        ))
    };
    run().unwrap_or_else(|e| Verdict::fail(e.to_string()))
}

/// Shrinks a shipped config so that every command runs in seconds.
fn reduced(text: &str, replacements: &[(&str, &str)]) -> String {
    text.lines()
        .map(|line| {
            let key = line.split('=').next().unwrap_or("").trim();
            match replacements.iter().find(|(k, _)| *k == key) {
                Some((k, v)) => format!("{k} = {v}"),
                None => line.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn run_all(text: &str, cmds: &[Command], threads: usize) -> Result<BTreeMap<String, String>, String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    let opts = RunOptions {
        seed: 7,
        count: Some(100),
        ..RunOptions::default()
    };
    let mut files = BTreeMap::new();
    for &cmd in cmds {
        let art = pool.install(|| pipeline(text, cmd, &opts))?;
        for (name, contents) in art.files {
            files.insert(format!("{}/{name}", cmd.name()), contents);
        }
    }
    Ok(files)
}

fn determinism() -> Verdict {
    let start = Instant::now();
    let small = [
        ("n", "128"),
        ("corrector_n", "64"),
        ("epsilon", "0.125 0.0625"),
        // the rate and decay fits need three entries with T >= 16 and R >= 4
        ("t", "8 16 32 64"),
        ("radii", "4 5 6"),
    ];
    let laminate = reduced(DIRICHLET, &small);
    let neumann = reduced(NEUMANN, &small);
    let qp = reduced(QUASIPERIODIC, &[("n", "1024"), ("corrector_n", "1024"), ("t", "8 16 32 64"), ("radii", "1 4 8 16")]);
    let suites: [(&str, &str, Vec<Command>); 3] = [
        ("laminate", &laminate, Command::ALL.to_vec()),
        ("neumann", &neumann, vec![Command::Rate, Command::Boundary]),
        ("quasi-periodic", &qp, vec![Command::Corrector, Command::Homogenize, Command::Rho]),
    ];
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (label, text, cmds) in &suites {
        let first = run_all(text, cmds, 1);
        let second = run_all(text, cmds, 3);
        match (first, second) {
            (Ok(a), Ok(b)) => {
                if a.keys().ne(b.keys()) {
                    mismatched.push(format!("{label}: file sets differ"));
                }
                for (name, contents) in &a {
                    compared += 1;
                    if b.get(name) != Some(contents) {
                        mismatched.push(format!("{label}/{name}"));
                    }
                }
            }
            (Err(e), _) | (_, Err(e)) => mismatched.push(format!("{label}: {e}")),
        }
    }
    let pass = mismatched.is_empty() && compared > 0;
    let what = if pass {
        format!("{compared} files identical across repeat runs (1 vs 3 threads)")
    } else {
        format!("mismatches: {}", mismatched.join(", "))
    };
    Verdict::new(pass, format!("{what}, {:.1} s", start.elapsed().as_secs_f64()))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("constant-coefficient exactness", constant_coefficients),
        ("1D homogenization oracle", one_dimensional),
        ("2D laminate oracle", laminate_cell),
        ("Dirichlet rate", dirichlet_rate),
        ("Neumann rate", neumann_rate),
        ("uniform Lipschitz probes", uniform_lipschitz),
        ("corrector bounds", corrector_bounds),
        ("iteration lemma fuzzing", lemma_fuzzing),
        ("flatness decay", flatness_decay),
        ("Dini integrals", dini),
        ("determinism", determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let verdict = check();
        if !verdict.pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {}",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.detail
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
