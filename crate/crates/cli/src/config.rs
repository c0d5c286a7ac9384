//! Experiment files: `[section]` headers followed by `key = value` lines.
//! `#` starts a comment. Vectors are whitespace-separated numbers,
//! multi-component data expressions are separated by `;`.

use std::fmt::Write as _;

use homoglab_core::field::{ellipticity_check, CoefTensor, Mode, RhoSearch, TensorField};
use homoglab_core::{Error, Result};

use crate::expr::{parse_expr, Expr};

/// An expression together with the text it was parsed from. Equality
/// compares the parsed tree only.
#[derive(Clone, Debug)]
pub struct ExprText {
    pub src: String,
    pub expr: Expr,
}

impl PartialEq for ExprText {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl ExprText {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(ExprText {
            src: src.trim().to_string(),
            expr: parse_expr(src)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpec {
    pub freq: Vec<f64>,
    /// One value (isotropic) or all `d²m²` entries.
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSpec {
    pub d: usize,
    pub m: usize,
    pub mu: f64,
    pub mean: Vec<f64>,
    pub modes: Vec<ModeSpec>,
    pub period: Option<Vec<f64>>,
}

fn tensor(d: usize, m: usize, values: &[f64]) -> Result<CoefTensor> {
    match values.len() {
        1 => Ok(CoefTensor::isotropic(d, m, values[0])),
        n if n == d * d * m * m => CoefTensor::from_vec(d, m, values.to_vec()),
        n => Err(Error::InvalidArgument(format!(
            "tensor needs 1 or {} entries, got {n}",
            d * d * m * m
        ))),
    }
}

impl FieldSpec {
    pub fn build(&self) -> Result<TensorField> {
        let modes = self
            .modes
            .iter()
            .map(|s| {
                Ok(Mode {
                    freq: s.freq.clone(),
                    cos: tensor(self.d, self.m, &s.cos)?,
                    sin: tensor(self.d, self.m, &s.sin)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TensorField::new(tensor(self.d, self.m, &self.mean)?, modes, self.mu, self.period.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub side: Vec<f64>,
    /// Intervals per axis of the physical domain.
    pub n: usize,
    /// Intervals per axis of corrector boxes.
    pub corrector_n: usize,
    pub box_side: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub epsilon: Vec<f64>,
    pub t: Vec<f64>,
    pub radii: Vec<f64>,
    pub sigma: f64,
    /// Corrector reference for distances when the field is not periodic.
    pub reference_t: Option<f64>,
    /// Side of the window the ρ search scans over.
    pub rho_window: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcSpec {
    pub kind: BcKind,
    /// One expression per component: `f` for Dirichlet, `g` for Neumann.
    pub data: Vec<ExprText>,
    pub source: Option<Vec<ExprText>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSpec {
    pub center: Vec<f64>,
    pub r: f64,
    pub p: f64,
    pub boundary_axis: usize,
    pub boundary_center: Vec<f64>,
    pub boundary_r: f64,
    pub theta: f64,
    pub k: f64,
    pub lemma: Vec<(f64, f64)>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_iter: usize,
}

/// Thresholds behind the pass flags of each command.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckSpec {
    pub slope_min: f64,
    pub ratio_max: f64,
    pub probe_ratio_max: f64,
    pub contraction_max: f64,
    pub uniformity_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub field: FieldSpec,
    pub grid: GridSpec,
    pub sweep: SweepSpec,
    pub bc: BcSpec,
    pub probe: ProbeSpec,
    pub solver: SolverSpec,
    pub check: CheckSpec,
    pub output: String,
}

struct Entry {
    line: usize,
    column: usize,
    key: String,
    value: String,
}

struct Section {
    name: String,
    entries: Vec<Entry>,
    used: Vec<bool>,
}

impl Section {
    fn take(&mut self, key: &str) -> Vec<(usize, usize, String)> {
        let mut out = Vec::new();
        for (k, e) in self.entries.iter().enumerate() {
            if e.key == key {
                self.used[k] = true;
                out.push((e.line, e.column, e.value.clone()));
            }
        }
        out
    }

    fn one(&mut self, key: &str) -> Result<Option<(usize, usize, String)>> {
        let mut all = self.take(key);
        if all.len() > 1 {
            let (line, column, _) = all[1];
            return Err(Error::Parse {
                line,
                column,
                message: format!("duplicate key '{key}' in [{}]", self.name),
            });
        }
        Ok(all.pop())
    }

    fn required(&mut self, key: &str) -> Result<(usize, usize, String)> {
        let name = self.name.clone();
        self.one(key)?.ok_or_else(|| Error::Parse {
            line: 0,
            column: 0,
            message: format!("missing key '{key}' in [{name}]"),
        })
    }
}

fn at(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn number(entry: &(usize, usize, String)) -> Result<f64> {
    entry.2.trim().parse().map_err(|_| at(entry.0, entry.1, format!("expected a number, got '{}'", entry.2)))
}

fn integer(entry: &(usize, usize, String)) -> Result<usize> {
    entry.2.trim().parse().map_err(|_| at(entry.0, entry.1, format!("expected an integer, got '{}'", entry.2)))
}

fn numbers(entry: &(usize, usize, String)) -> Result<Vec<f64>> {
    entry
        .2
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| at(entry.0, entry.1, format!("expected numbers, got '{t}'"))))
        .collect()
}

fn expressions(entry: &(usize, usize, String)) -> Result<Vec<ExprText>> {
    entry
        .2
        .split(';')
        .map(|s| {
            ExprText::parse(s).map_err(|e| match e {
                Error::Parse { column, message, .. } => at(entry.0, entry.1 + column, message),
                other => other,
            })
        })
        .collect()
}

fn sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap();
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(line, 1, "unterminated section header"))?
                .trim()
                .to_string();
            if out.iter().any(|s| s.name == name) {
                return Err(at(line, 1, format!("section [{name}] appears twice")));
            }
            out.push(Section {
                name,
                entries: Vec::new(),
                used: Vec::new(),
            });
            continue;
        }
        let eq = content.find('=').ok_or_else(|| at(line, 1, "expected 'key = value'"))?;
        let key = content[..eq].trim().to_string();
        if key.is_empty() {
            return Err(at(line, 1, "empty key"));
        }
        let section = out.last_mut().ok_or_else(|| at(line, 1, "key outside of any section"))?;
        section.entries.push(Entry {
            line,
            column: eq + 2,
            key,
            value: content[eq + 1..].trim().to_string(),
        });
        section.used.push(false);
    }
    Ok(out)
}

const SECTIONS: [&str; 8] = ["field", "grid", "sweep", "bc", "probe", "solver", "check", "output"];

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut secs = sections(text)?;
        for s in &secs {
            if !SECTIONS.contains(&s.name.as_str()) {
                return Err(at(0, 0, format!("unknown section [{}]", s.name)));
            }
        }
        let mut get = |name: &str| -> Section {
            match secs.iter().position(|s| s.name == name) {
                Some(k) => secs.remove(k),
                None => Section {
                    name: name.to_string(),
                    entries: Vec::new(),
                    used: Vec::new(),
                },
            }
        };
        let mut field = get("field");
        let mut grid = get("grid");
        let mut sweep = get("sweep");
        let mut bc = get("bc");
        let mut probe = get("probe");
        let mut solver = get("solver");
        let mut check = get("check");
        let mut output = get("output");

        let d = integer(&field.required("d")?)?;
        let m = field.one("m")?.map(|e| integer(&e)).transpose()?.unwrap_or(1);
        let mut modes = Vec::new();
        for e in field.take("mode") {
            let parts: Vec<&str> = e.2.split('|').collect();
            if parts.len() != 3 {
                return Err(at(e.0, e.1, "mode needs 'freq | cos | sin'"));
            }
            let nums = |s: &str| numbers(&(e.0, e.1, s.to_string()));
            modes.push(ModeSpec {
                freq: nums(parts[0])?,
                cos: nums(parts[1])?,
                sin: nums(parts[2])?,
            });
        }
        let field_spec = FieldSpec {
            d,
            m,
            mu: number(&field.required("mu")?)?,
            mean: numbers(&field.required("mean")?)?,
            modes,
            period: field.one("period")?.map(|e| numbers(&e)).transpose()?,
        };

        let origin = grid.one("origin")?.map(|e| numbers(&e)).transpose()?.unwrap_or(vec![0.0; d]);
        let side = grid.one("side")?.map(|e| numbers(&e)).transpose()?.unwrap_or(vec![1.0; d]);
        let n = grid.one("n")?.map(|e| integer(&e)).transpose()?.unwrap_or(128);
        let grid_spec = GridSpec {
            corrector_n: grid.one("corrector_n")?.map(|e| integer(&e)).transpose()?.unwrap_or(n),
            box_side: grid.one("box")?.map(|e| numbers(&e)).transpose()?,
            origin,
            side,
            n,
        };

        let list = |s: &mut Section, key: &str| -> Result<Vec<f64>> { Ok(s.one(key)?.map(|e| numbers(&e)).transpose()?.unwrap_or_default()) };
        let sweep_spec = SweepSpec {
            epsilon: list(&mut sweep, "epsilon")?,
            t: list(&mut sweep, "t")?,
            radii: list(&mut sweep, "radii")?,
            sigma: sweep.one("sigma")?.map(|e| number(&e)).transpose()?.unwrap_or(0.9),
            reference_t: sweep.one("reference_t")?.map(|e| number(&e)).transpose()?,
            rho_window: sweep.one("rho_window")?.map(|e| number(&e)).transpose()?.unwrap_or(100.0),
        };

        let kind = match bc.one("kind")?.map(|e| e.2.to_ascii_lowercase()) {
            None => BcKind::Dirichlet,
            Some(k) if k == "dirichlet" => BcKind::Dirichlet,
            Some(k) if k == "neumann" => BcKind::Neumann,
            Some(k) => return Err(at(0, 0, format!("unknown boundary kind '{k}'"))),
        };
        let data = match bc.one("data")? {
            Some(e) => expressions(&e)?,
            None => vec![ExprText::parse("0")?; m],
        };
        let bc_spec = BcSpec {
            kind,
            data,
            source: bc.one("source")?.map(|e| expressions(&e)).transpose()?,
        };

        let center = probe.one("center")?.map(|e| numbers(&e)).transpose()?;
        let default_center: Vec<f64> = grid_spec.origin.iter().zip(&grid_spec.side).map(|(o, s)| o + 0.5 * s).collect();
        let mut lemma = Vec::new();
        if let Some(e) = probe.one("lemma")? {
            for pair in e.2.split(';') {
                let v = numbers(&(e.0, e.1, pair.to_string()))?;
                if v.len() != 2 {
                    return Err(at(e.0, e.1, "lemma pairs are 'C0 C1' separated by ';'"));
                }
                lemma.push((v[0], v[1]));
            }
        }
        let probe_spec = ProbeSpec {
            center: center.unwrap_or_else(|| default_center.clone()),
            r: probe.one("r")?.map(|e| number(&e)).transpose()?.unwrap_or(0.0625),
            p: probe.one("p")?.map(|e| number(&e)).transpose()?.unwrap_or(4.0),
            boundary_axis: probe.one("boundary_axis")?.map(|e| integer(&e)).transpose()?.unwrap_or(d - 1),
            boundary_center: probe.one("boundary_center")?.map(|e| numbers(&e)).transpose()?.unwrap_or(default_center),
            boundary_r: probe.one("boundary_r")?.map(|e| number(&e)).transpose()?.unwrap_or(0.04),
            theta: probe.one("theta")?.map(|e| number(&e)).transpose()?.unwrap_or(0.125),
            k: probe.one("k")?.map(|e| number(&e)).transpose()?.unwrap_or(0.0),
            lemma: if lemma.is_empty() { vec![(1.0, 1.0), (2.0, 0.5), (5.0, 3.0)] } else { lemma },
            count: probe.one("count")?.map(|e| integer(&e)).transpose()?.unwrap_or(1000),
        };

        let solver_spec = SolverSpec {
            tol: solver.one("tol")?.map(|e| number(&e)).transpose()?.unwrap_or(1e-10),
            max_iter: solver.one("max_iter")?.map(|e| integer(&e)).transpose()?.unwrap_or(100_000),
        };
        let check_spec = CheckSpec {
            slope_min: check.one("slope_min")?.map(|e| number(&e)).transpose()?.unwrap_or(0.6),
            ratio_max: check.one("ratio_max")?.map(|e| number(&e)).transpose()?.unwrap_or(4.0),
            probe_ratio_max: check.one("probe_ratio_max")?.map(|e| number(&e)).transpose()?.unwrap_or(3.0),
            contraction_max: check.one("contraction_max")?.map(|e| number(&e)).transpose()?.unwrap_or(0.5),
            uniformity_max: check.one("uniformity_max")?.map(|e| number(&e)).transpose()?.unwrap_or(3.0),
        };
        let out_dir = output.one("dir")?.map(|e| e.2).unwrap_or_else(|| "out".to_string());

        for s in [&field, &grid, &sweep, &bc, &probe, &solver, &check, &output] {
            if let Some(k) = s.used.iter().position(|u| !u) {
                let e = &s.entries[k];
                return Err(at(e.line, 1, format!("unknown key '{}' in [{}]", e.key, s.name)));
            }
        }

        let cfg = Config {
            field: field_spec,
            grid: grid_spec,
            sweep: sweep_spec,
            bc: bc_spec,
            probe: probe_spec,
            solver: solver_spec,
            check: check_spec,
            output: out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks that need no solves. Ellipticity is checked
    /// separately by [`Config::load_field`].
    pub fn validate(&self) -> Result<()> {
        let d = self.field.d;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if d == 0 || self.field.m == 0 {
            return bad("d and m must be at least 1".into());
        }
        if self.grid.origin.len() != d || self.grid.side.len() != d {
            return bad(format!("grid origin and side need {d} entries"));
        }
        if self.probe.center.len() != d || self.probe.boundary_center.len() != d {
            return bad(format!("probe centers need {d} entries"));
        }
        if self.probe.boundary_axis >= d {
            return bad("boundary_axis out of range".into());
        }
        for (name, list) in [("epsilon", &self.sweep.epsilon), ("t", &self.sweep.t), ("radii", &self.sweep.radii)] {
            if list.is_empty() {
                return bad(format!("sweep '{name}' is empty"));
            }
            if list.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return bad(format!("sweep '{name}' must hold positive finite values"));
            }
        }
        if self.bc.data.len() != self.field.m {
            return bad(format!("boundary data needs {} expressions", self.field.m));
        }
        if let Some(src) = &self.bc.source {
            if src.len() != self.field.m {
                return bad(format!("source needs {} expressions", self.field.m));
            }
        }
        let exprs = self.bc.data.iter().chain(self.bc.source.iter().flatten());
        for e in exprs {
            if e.expr.arity() > d {
                return bad(format!("expression '{}' uses coordinates beyond x{d}", e.src));
            }
        }
        Ok(())
    }

    /// Builds the field and requires the claimed ellipticity to hold on samples.
    pub fn load_field(&self, seed: u64) -> Result<TensorField> {
        let field = self.field.build()?;
        let report = ellipticity_check(&field, 2000, seed)?;
        if !report.pass {
            return Err(Error::InvalidArgument(format!(
                "field fails the ellipticity check: sampled bounds [{:.4e}, {:.4e}] against mu = {}",
                report.mu_lower, report.mu_upper, self.field.mu
            )));
        }
        Ok(field)
    }

    pub fn rho_search(&self) -> RhoSearch {
        RhoSearch {
            window_radius: 0.5 * self.sweep.rho_window,
            ..RhoSearch::default()
        }
    }

    /// Canonical text form; parsing it yields an equal `Config`.
    pub fn to_text(&self) -> String {
        let v = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let e = |xs: &[ExprText]| xs.iter().map(|x| x.src.clone()).collect::<Vec<_>>().join("; ");
        let mut s = String::new();
        let f = &self.field;
        let _ = writeln!(s, "[field]\nd = {}\nm = {}\nmu = {:?}\nmean = {}", f.d, f.m, f.mu, v(&f.mean));
        for mode in &f.modes {
            let _ = writeln!(s, "mode = {} | {} | {}", v(&mode.freq), v(&mode.cos), v(&mode.sin));
        }
        if let Some(p) = &f.period {
            let _ = writeln!(s, "period = {}", v(p));
        }
        let g = &self.grid;
        let _ = writeln!(
            s,
            "\n[grid]\norigin = {}\nside = {}\nn = {}\ncorrector_n = {}",
            v(&g.origin),
            v(&g.side),
            g.n,
            g.corrector_n
        );
        if let Some(b) = &g.box_side {
            let _ = writeln!(s, "box = {}", v(b));
        }
        let w = &self.sweep;
        let _ = writeln!(
            s,
            "\n[sweep]\nepsilon = {}\nt = {}\nradii = {}\nsigma = {:?}\nrho_window = {:?}",
            v(&w.epsilon),
            v(&w.t),
            v(&w.radii),
            w.sigma,
            w.rho_window
        );
        if let Some(t) = w.reference_t {
            let _ = writeln!(s, "reference_t = {t:?}");
        }
        let kind = match self.bc.kind {
            BcKind::Dirichlet => "dirichlet",
            BcKind::Neumann => "neumann",
        };
        let _ = writeln!(s, "\n[bc]\nkind = {kind}\ndata = {}", e(&self.bc.data));
        if let Some(src) = &self.bc.source {
            let _ = writeln!(s, "source = {}", e(src));
        }
        let p = &self.probe;
        let lemma = p.lemma.iter().map(|(a, b)| format!("{a:?} {b:?}")).collect::<Vec<_>>().join("; ");
        let _ = writeln!(
            s,
            "\n[probe]\ncenter = {}\nr = {:?}\np = {:?}\nboundary_axis = {}\nboundary_center = {}\nboundary_r = {:?}\ntheta = {:?}\nk = {:?}\nlemma = {lemma}\ncount = {}",
            v(&p.center),
            p.r,
            p.p,
            p.boundary_axis,
            v(&p.boundary_center),
            p.boundary_r,
            p.theta,
            p.k,
            p.count
        );
        let _ = writeln!(s, "\n[solver]\ntol = {:?}\nmax_iter = {}", self.solver.tol, self.solver.max_iter);
        let c = &self.check;
        let _ = writeln!(
            s,
            "\n[check]\nslope_min = {:?}\nratio_max = {:?}\nprobe_ratio_max = {:?}\ncontraction_max = {:?}\nuniformity_max = {:?}",
            c.slope_min, c.ratio_max, c.probe_ratio_max, c.contraction_max, c.uniformity_max
        );
        let _ = writeln!(s, "\n[output]\ndir = {}", self.output);
        s
    }
}
