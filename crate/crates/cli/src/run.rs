//! Command pipelines and their outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use homoglab_core::campanato::{
    constant_excess_curve, flatness_profile, improvement_step_audit, lemma_fuzz, Saturation,
};
use homoglab_core::corrector::{corrector_bounds, default_box, psi_distance, solve_cell_corrector, solve_corrector, CorrectorOptions, CorrectorSet};
use homoglab_core::discrete::{ball_nodes, SolverSettings};
use homoglab_core::field::{decay_fit, rho_table, RhoTable, TensorField};
use homoglab_core::homogenize::{b_matrix, effective_tensor, exact_periodic_cell, theta, EffectiveTensor, ModulusTable};
use homoglab_core::solver::{
    boundary_lipschitz_probe, lipschitz_probe, rate_sweep, solve_bvp, w1p_probe, BoundaryData, BoundaryPatch, BvpSpec, DataFn, ProbeReport,
    ProbeSetup, RateMode, RateSetup, SourceFn,
};
use homoglab_core::{discrete::Coefficient, Error, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{BcKind, Config, ExprText};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Corrector,
    Homogenize,
    Rho,
    Rate,
    Lipschitz,
    W1p,
    Boundary,
    Flatness,
    LemmaFuzz,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Corrector,
        Command::Homogenize,
        Command::Rho,
        Command::Rate,
        Command::Lipschitz,
        Command::W1p,
        Command::Boundary,
        Command::Flatness,
        Command::LemmaFuzz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Corrector => "corrector",
            Command::Homogenize => "homogenize",
            Command::Rho => "rho",
            Command::Rate => "rate",
            Command::Lipschitz => "lipschitz",
            Command::W1p => "w1p",
            Command::Boundary => "boundary",
            Command::Flatness => "flatness",
            Command::LemmaFuzz => "lemma-fuzz",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown command '{s}'")))
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub strict: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub override_resolution: bool,
    pub count: Option<usize>,
}

/// What a pipeline produced before anything touches the disk.
#[derive(Debug, Default)]
pub struct Artifacts {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    pub pass: BTreeMap<String, bool>,
    pub details: serde_json::Map<String, Value>,
}

impl Artifacts {
    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.pass.insert(name.to_string(), ok);
    }

    fn detail(&mut self, name: &str, v: impl Serialize) {
        self.details.insert(name.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn passed(&self) -> bool {
        self.pass.values().all(|v| *v)
    }

    pub fn csv(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

/// Shortest round-trip scientific notation; `inf` for infinities.
fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn data_fn(exprs: &[ExprText]) -> DataFn {
    let es: Vec<_> = exprs.iter().map(|e| e.expr.clone()).collect();
    Arc::new(move |x: &[f64]| es.iter().map(|e| e.eval(x)).collect())
}

/// Everything a command needs besides the config.
struct Context<'a> {
    cfg: &'a Config,
    field: TensorField,
    opts: &'a RunOptions,
    solver: SolverSettings,
}

impl Context<'_> {
    fn bc(&self) -> BoundaryData {
        let f = data_fn(&self.cfg.bc.data);
        match self.cfg.bc.kind {
            BcKind::Dirichlet => BoundaryData::Dirichlet(f),
            BcKind::Neumann => BoundaryData::Neumann(Arc::new(move |x: &[f64], _n: &[f64]| f(x))),
        }
    }

    fn source(&self) -> Option<SourceFn> {
        self.cfg.bc.source.as_ref().map(|s| SourceFn(data_fn(s)))
    }

    fn n(&self) -> Vec<usize> {
        vec![self.cfg.grid.n; self.cfg.field.d]
    }

    fn bvp(&self, coefficient: Coefficient) -> BvpSpec {
        BvpSpec {
            coefficient,
            origin: self.cfg.grid.origin.clone(),
            side: self.cfg.grid.side.clone(),
            n: self.n(),
            bc: self.bc(),
            source: self.source(),
            solver: self.solver,
            override_resolution: self.opts.override_resolution,
        }
    }

    fn probe_setup(&self) -> ProbeSetup {
        ProbeSetup {
            origin: self.cfg.grid.origin.clone(),
            side: self.cfg.grid.side.clone(),
            n: self.n(),
            bc: self.bc(),
            source: self.source(),
            solver: self.solver,
            override_resolution: self.opts.override_resolution,
        }
    }

    fn corrector_options(&self, box_side: Option<Vec<f64>>) -> CorrectorOptions {
        CorrectorOptions {
            box_side,
            n: self.cfg.grid.corrector_n,
            solver: self.solver,
            override_resolution: self.opts.override_resolution,
        }
    }

    fn effective(&self) -> Result<EffectiveTensor> {
        if self.field.is_constant() {
            return Ok(EffectiveTensor::given(self.field.mean().clone()));
        }
        if self.field.period().is_some() {
            return exact_periodic_cell(&self.field, self.cfg.grid.corrector_n, self.solver);
        }
        let t = self.cfg.sweep.t.iter().copied().fold(0.0, f64::max);
        let cs = solve_corrector(&self.field, t, &self.corrector_options(self.cfg.grid.box_side.clone()))?;
        Ok(effective_tensor(&cs))
    }

    fn rho(&self) -> Result<RhoTable> {
        rho_table(&self.field, &self.cfg.sweep.radii, &self.cfg.rho_search())
    }

    /// `ρ` table, corrector distances against a reference corrector, and
    /// the `Θ`, `ω` curves on the sweeps.
    fn moduli(&self) -> Result<ModulusTable> {
        let ts = &self.cfg.sweep.t;
        let (reference, box_side) = if self.field.period().is_some() {
            (solve_cell_corrector(&self.field, self.cfg.grid.corrector_n, self.solver)?, None)
        } else {
            let tmax = ts.iter().copied().fold(0.0, f64::max);
            let t_ref = self.cfg.sweep.reference_t.unwrap_or(4.0 * tmax);
            let side = self.cfg.grid.box_side.clone().unwrap_or_else(|| default_box(&self.field, t_ref));
            (solve_corrector(&self.field, t_ref, &self.corrector_options(Some(side.clone())))?, Some(side))
        };
        let mut psi = Vec::new();
        for &t in ts {
            if reference.t.is_finite() && reference.t < 4.0 * t {
                continue;
            }
            let cs = solve_corrector(&self.field, t, &self.corrector_options(box_side.clone()))?;
            psi.push((t, psi_distance(&cs, &reference)?));
        }
        let mut table = ModulusTable::new(self.cfg.sweep.sigma, self.rho()?, psi)?;
        table.tabulate(ts, &[])?;
        Ok(table)
    }
}

fn probe_csv(report: &ProbeReport) -> String {
    csv("epsilon,ratio", report.rows.iter().map(|r| vec![num(r.epsilon), num(r.ratio)]))
}

fn corrector(ctx: &Context, art: &mut Artifacts, out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    let mut sets: Vec<CorrectorSet> = Vec::new();
    for &t in &ctx.cfg.sweep.t {
        let cs = solve_corrector(&ctx.field, t, &ctx.corrector_options(ctx.cfg.grid.box_side.clone()))?;
        let b = corrector_bounds(&cs, ctx.cfg.sweep.sigma, ctx.opts.seed)?;
        rows.push(vec![
            num(t),
            num(cs.grid.side()[0]),
            num(cs.grid.h_max()),
            num(cs.residuals.iter().copied().fold(0.0, f64::max)),
            cs.iterations.iter().max().copied().unwrap_or(0).to_string(),
            num(cs.periodization_error),
            num(b.sup_over_t),
            num(b.lipschitz),
            num(b.energy),
            num(b.energy_bound),
        ]);
        bounds.push(b);
        sets.push(cs);
    }
    art.file(
        "corrector.csv",
        csv(
            "T,box,h,residual,iterations,periodization_error,sup_over_t,lipschitz,energy,energy_bound",
            rows,
        ),
    );
    for cs in &sets {
        cs.save(&out.join("correctors").join(format!("T{}", num(cs.t))))?;
    }
    let lips: Vec<f64> = bounds.iter().map(|b| b.lipschitz).collect();
    let lo = lips.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lips.iter().copied().fold(0.0, f64::max);
    let mut order: Vec<(f64, f64)> = ctx.cfg.sweep.t.iter().copied().zip(bounds.iter().map(|b| b.sup_over_t)).collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    art.flag("energy_within_bound", bounds.iter().all(|b| b.energy <= b.energy_bound));
    art.flag("lipschitz_uniform", lo > 0.0 && hi / lo <= 2.0 || hi == 0.0);
    art.flag("scaled_sup_nonincreasing", order.windows(2).all(|w| w[1].1 <= 1.05 * w[0].1));
    art.detail("bounds", &bounds);
    Ok(())
}

fn homogenize(ctx: &Context, art: &mut Artifacts) -> Result<()> {
    let mut tensors: Vec<(String, f64, EffectiveTensor)> = Vec::new();
    let mut b_means = Vec::new();
    for &t in &ctx.cfg.sweep.t {
        let cs = solve_corrector(&ctx.field, t, &ctx.corrector_options(ctx.cfg.grid.box_side.clone()))?;
        let eff = effective_tensor(&cs);
        let b = b_matrix(&cs, &eff)?;
        b_means.push((t, b.mean.max_abs()));
        tensors.push(("approximate".into(), t, eff));
    }
    if ctx.field.period().is_some() {
        let eff = exact_periodic_cell(&ctx.field, ctx.cfg.grid.corrector_n, ctx.solver)?;
        tensors.push(("exact_cell".into(), f64::INFINITY, eff));
    }
    let (d, m) = (ctx.field.dim(), ctx.field.components());
    let mut rows = Vec::new();
    for (method, t, eff) in &tensors {
        for i in 0..d {
            for j in 0..d {
                for a in 0..m {
                    for b in 0..m {
                        rows.push(vec![
                            method.clone(),
                            num(*t),
                            (i + 1).to_string(),
                            (j + 1).to_string(),
                            (a + 1).to_string(),
                            (b + 1).to_string(),
                            num(eff.get(i, j, a, b)),
                        ]);
                    }
                }
            }
        }
    }
    art.file("effective.csv", csv("method,T,i,j,alpha,beta,value", rows));
    art.flag("elliptic", tensors.iter().all(|(_, _, e)| e.is_elliptic(ctx.field.mu())));
    art.detail("b_mean_max_abs", &b_means);
    Ok(())
}

fn rho(ctx: &Context, art: &mut Artifacts) -> Result<()> {
    let table = ctx.rho()?;
    let rows = (0..table.len()).map(|k| vec![num(table.radii[k]), num(table.values[k]), num(table.lower[k]), num(table.upper[k])]);
    art.file("rho.csv", csv("R,rho,lower,upper", rows));
    let bound = 2.0 * ctx.field.sup_norm_bound();
    art.flag("nonincreasing", table.values.windows(2).all(|w| w[1] <= w[0]));
    art.flag("bounded", table.values.iter().all(|v| *v >= 0.0 && *v <= bound));
    art.detail("decay_fit", decay_fit(&table)?);
    Ok(())
}

fn rate(ctx: &Context, art: &mut Artifacts) -> Result<()> {
    let effective = ctx.effective()?;
    let moduli = if ctx.field.is_constant() {
        let radii = ctx.cfg.sweep.radii.clone();
        let zeros = vec![0.0; radii.len()];
        let psi = ctx.cfg.sweep.t.iter().map(|t| (*t, 0.0)).collect();
        ModulusTable::new(ctx.cfg.sweep.sigma, RhoTable::from_values(radii, zeros)?, psi)?
    } else {
        ctx.moduli()?
    };
    let mode = match ctx.cfg.bc.kind {
        BcKind::Dirichlet => RateMode::Dirichlet,
        BcKind::Neumann => RateMode::Neumann,
    };
    let setup = RateSetup {
        origin: ctx.cfg.grid.origin.clone(),
        side: ctx.cfg.grid.side.clone(),
        n: ctx.n(),
        bc: ctx.bc(),
        source: ctx.source(),
        solver: ctx.solver,
        sigma: ctx.cfg.sweep.sigma,
        override_resolution: ctx.opts.override_resolution,
    };
    let report = rate_sweep(&ctx.field, &ctx.cfg.sweep.epsilon, mode, &setup, &effective, &moduli)?;
    let rows = report
        .rows
        .iter()
        .map(|r| vec![num(r.epsilon), num(r.h), num(r.l2_error), num(r.omega), num(r.theory_ratio)]);
    art.file("rate.csv", csv("epsilon,h,l2_error,omega,theory_ratio", rows));
    art.file(
        "psi.csv",
        csv("T,psi_distance", moduli.psi_distance.iter().map(|(t, v)| vec![num(*t), num(*v)])),
    );
    let thetas = ctx
        .cfg
        .sweep
        .t
        .iter()
        .map(|t| Ok(vec![num(*t), num(theta(&moduli.rho, ctx.cfg.sweep.sigma, *t)?.value)]))
        .collect::<Result<Vec<_>>>()?;
    art.file("theta.csv", csv("T,theta", thetas));
    let check = &ctx.cfg.check;
    match mode {
        RateMode::Dirichlet => {
            art.flag("slope", report.degenerate || report.slope.is_some_and(|s| s >= check.slope_min));
        }
        RateMode::Neumann => art.flag("monotone", report.degenerate || report.monotone),
    }
    art.flag("ratio_bounded", report.degenerate || report.ratio_spread <= check.ratio_max);
    art.detail("slope", report.slope);
    art.detail("ratio_spread", report.ratio_spread);
    art.detail("degenerate", report.degenerate);
    art.detail("skipped", &report.skipped);
    art.detail("effective", &effective);
    Ok(())
}

fn probe(ctx: &Context, art: &mut Artifacts, cmd: Command) -> Result<()> {
    let setup = ctx.probe_setup();
    let eps = &ctx.cfg.sweep.epsilon;
    let p = &ctx.cfg.probe;
    let (name, report) = match cmd {
        Command::Lipschitz => ("lipschitz.csv", lipschitz_probe(&ctx.field, eps, &setup, &p.center, p.r)?),
        Command::W1p => ("w1p.csv", w1p_probe(&ctx.field, eps, p.p, &setup, &p.center, p.r)?),
        _ => {
            let patch = BoundaryPatch::lower(p.boundary_axis, p.boundary_center.clone(), p.boundary_r);
            ("boundary.csv", boundary_lipschitz_probe(&ctx.field, eps, &setup, &patch)?)
        }
    };
    art.file(name, probe_csv(&report));
    art.flag("ratio_uniform", report.max_ratio <= ctx.cfg.check.probe_ratio_max);
    art.detail("max_ratio", report.max_ratio);
    Ok(())
}

fn flatness(ctx: &Context, art: &mut Artifacts) -> Result<()> {
    let cfg = ctx.cfg;
    let p = &cfg.probe;
    let mut eps = cfg.sweep.epsilon.clone();
    eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let effective = ctx.effective()?;
    let floor = *eps.last().unwrap();

    let u0 = solve_bvp(&ctx.bvp(Coefficient::Constant(effective.tensor.clone())))?.u;
    let homogenized = flatness_profile(&u0, &p.center, floor, p.theta, p.k)?;
    art.file("flatness_homogenized.csv", homogenized.to_csv());
    let contraction = homogenized.max_contraction().unwrap_or(0.0);
    art.flag("homogenized_contraction", contraction <= cfg.check.contraction_max);
    art.detail("homogenized_contraction", contraction);

    // the largest ball around the center that fits in the domain
    let reach = cfg
        .grid
        .origin
        .iter()
        .zip(&cfg.grid.side)
        .zip(&p.center)
        .map(|((o, s), c)| (c - o).min(o + s - c))
        .fold(f64::INFINITY, f64::min);
    let outer_r = reach.min(1.0);
    let t_max = outer_r / 2.0;

    let mut curve_rows = Vec::new();
    let mut audit_rows = Vec::new();
    let mut constants = Vec::new();
    let mut skipped_profiles = Vec::new();
    for (k, &e) in eps.iter().enumerate() {
        let u = solve_bvp(&ctx.bvp(Coefficient::oscillating(&ctx.field, e)))?.u;
        // the iteration needs at least one scale above ε
        if e < p.theta {
            let profile = flatness_profile(&u, &p.center, e, p.theta, p.k)?;
            art.file(&format!("flatness_{k}.csv"), profile.to_csv());
        } else {
            skipped_profiles.push(e);
        }
        let mut ts = vec![t_max];
        while ts.last().unwrap() / 2.0 >= 2.0 * e * (1.0 - 1e-12) {
            ts.push(ts.last().unwrap() / 2.0);
        }
        let curve = constant_excess_curve(&u, &p.center, &ts)?;
        let nodes = ball_nodes(&u.grid, &p.center, outer_r)?;
        let norm = (nodes.iter().map(|&q| u.node(q).iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / nodes.len() as f64).sqrt();
        let peak = curve.iter().map(|c| c.1).fold(0.0, f64::max);
        let scale = p.k + norm;
        constants.push(if scale > 0.0 { peak / scale } else { 0.0 });
        for (t, v) in &curve {
            curve_rows.push(vec![num(e), num(*t), num(*v)]);
        }
        let audit = improvement_step_audit(&u, &p.center, p.r, p.theta, &effective, ctx.solver)?;
        audit_rows.push(vec![num(e), num(audit.r), num(audit.approx_error), num(audit.contraction)]);
    }
    art.file("excess_curve.csv", csv("epsilon,t,excess", curve_rows));
    art.file("audit.csv", csv("epsilon,r,approx_error,contraction", audit_rows));
    let hi = constants.iter().copied().fold(0.0, f64::max);
    let lo = constants.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY };
    art.flag("uniform_excess", spread <= cfg.check.uniformity_max);
    art.detail("excess_constants", &constants);
    art.detail("excess_spread", spread);
    art.detail("profiles_skipped_for_epsilon", &skipped_profiles);
    Ok(())
}

fn lemma(ctx: &Context, art: &mut Artifacts) -> Result<()> {
    let count = ctx.opts.count.unwrap_or(ctx.cfg.probe.count);
    let mut rows = Vec::new();
    let mut clean = true;
    let mut tamper = true;
    let mut corpus = Vec::new();
    for (k, &(c0, c1)) in ctx.cfg.probe.lemma.iter().enumerate() {
        for (mode, sat) in [("equality", Saturation::Equality), ("strict", Saturation::Strict)] {
            let seed = ctx.opts.seed.wrapping_mul(1_000_003).wrapping_add(2 * k as u64 + u64::from(sat == Saturation::Strict));
            let (s, instances) = lemma_fuzz(c0, c1, count, seed, sat)?;
            clean &= s.conclusion_violations == 0 && s.hypothesis_failures == 0;
            if sat == Saturation::Equality {
                tamper &= s.tamper_detected == count;
                if k == 0 {
                    corpus.extend(instances.into_iter().take(16));
                }
            }
            rows.push(vec![
                num(c0),
                num(c1),
                mode.to_string(),
                s.count.to_string(),
                num(s.witness),
                num(s.log_witness),
                s.hypothesis_failures.to_string(),
                s.conclusion_violations.to_string(),
                s.tamper_detected.to_string(),
                num(s.max_slope_ratio),
                num(s.max_excess_ratio),
            ]);
        }
    }
    art.file(
        "lemma_fuzz.csv",
        csv(
            "c0,c1,mode,count,witness,log_witness,hypothesis_failures,conclusion_violations,tamper_detected,max_slope_ratio,max_excess_ratio",
            rows,
        ),
    );
    art.file("lemma_corpus.json", serde_json::to_string_pretty(&corpus)?);
    art.flag("no_violations", clean);
    art.flag("tamper_detected", tamper);
    Ok(())
}

/// Runs one command on a parsed config without touching the disk except
/// for corrector binaries, which go under `out`.
pub fn execute(cfg: &Config, cmd: Command, opts: &RunOptions, out: &Path) -> Result<Artifacts> {
    let field = cfg.load_field(opts.seed)?;
    let ctx = Context {
        cfg,
        field,
        opts,
        solver: SolverSettings {
            tol: cfg.solver.tol,
            max_iter: cfg.solver.max_iter,
        },
    };
    let mut art = Artifacts::default();
    match cmd {
        Command::Corrector => corrector(&ctx, &mut art, out)?,
        Command::Homogenize => homogenize(&ctx, &mut art)?,
        Command::Rho => rho(&ctx, &mut art)?,
        Command::Rate => rate(&ctx, &mut art)?,
        Command::Lipschitz | Command::W1p | Command::Boundary => probe(&ctx, &mut art, cmd)?,
        Command::Flatness => flatness(&ctx, &mut art)?,
        Command::LemmaFuzz => lemma(&ctx, &mut art)?,
    }
    Ok(art)
}

/// Exit code for an error: 2 for solver and I/O failures, 1 for everything
/// that is a problem with the input.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotConverged { .. } | Error::Io(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

fn hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Result of [`run`]: the exit code and, when the pipeline ran, its artifacts.
pub struct Outcome {
    pub code: i32,
    pub out_dir: Option<PathBuf>,
    pub artifacts: Option<Artifacts>,
    pub error: Option<Error>,
}

fn failed(code: i32, err: Error) -> Outcome {
    Outcome {
        code,
        out_dir: None,
        artifacts: None,
        error: Some(err),
    }
}

/// Reads the config, runs the command and writes every output file.
pub fn run(config_path: &Path, cmd: Command, opts: &RunOptions) -> Outcome {
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => return failed(1, e.into()),
    };
    let cfg = match Config::parse(&text) {
        Ok(c) => c,
        Err(e) => return failed(1, e),
    };
    let out = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output));
    if let Err(e) = fs::create_dir_all(&out) {
        return failed(2, e.into());
    }
    let start = Instant::now();
    let art = match execute(&cfg, cmd, opts, &out) {
        Ok(a) => a,
        Err(e) => return failed(exit_code(&e), e),
    };
    let wall = start.elapsed().as_secs_f64();
    let write = || -> Result<()> {
        for (name, contents) in &art.files {
            fs::write(out.join(name), contents)?;
        }
        let summary = json!({
            "command": cmd.name(),
            "config_hash": hash(&text),
            "wall_time_s": wall,
            "pass": art.pass,
            "details": art.details,
        });
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        let stamp = json!({
            "seed": opts.seed,
            "tolerance": cfg.solver.tol,
            "max_iter": cfg.solver.max_iter,
            "threads": rayon::current_num_threads(),
            "override_resolution": opts.override_resolution,
            "versions": { "homoglab": env!("CARGO_PKG_VERSION"), "homoglab-core": homoglab_core::VERSION },
        });
        fs::write(out.join("stamp.json"), serde_json::to_string_pretty(&stamp)?)?;
        Ok(())
    };
    if let Err(e) = write() {
        return failed(2, e);
    }
    let code = if opts.strict && !art.passed() { 3 } else { 0 };
    Outcome {
        code,
        out_dir: Some(out),
        artifacts: Some(art),
        error: None,
    }
}
