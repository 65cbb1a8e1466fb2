//! Scenario files, batch runs and parameter sweeps.
//!
//! A scenario is a line-oriented document of `[section]` headers and
//! `key = value` lines; `#` starts a comment. Sections:
//!
//! ```text
//! [scenario]   name, output (default `out`), seed (default 0), max_wall (seconds)
//! [grid]       extent, cells (one value broadcasts), origin, bc
//! [model]      diffusion = <family> plus family keys, reaction = <family> plus keys
//! [initial]    kind = constant | trig | bump | eigenfunction | file, plus kind keys
//! [run]        t_end, threshold (1e6), safety (0.5), dt_min (1e-12), dt_max (0.1),
//!              reaction_fraction (0.1), output_interval (0.01), functionals
//! [certificate] or [certificate.<label>]
//!              kind = scalar | diagonal | system | kappa | falsifier, plus kind keys
//! [exact]      solution = js | affine | separable, times, grids, solution keys
//! [sweep]      param = <section>.<key> or <section>.<key>[i], values = v1, v2, …
//! ```
//!
//! `bc` takes one condition for every end, one per axis, or `lo/hi` pairs per
//! axis (`dirichlet`, `neumann`, `periodic`, `antiperiodic`, `value:g`).
//!
//! Exit codes: 0 finished (or certificate evaluated), 2 blow-up detected,
//! 3 stability floor, 4 numerical failure, 5 configuration or evaluation
//! error, 6 I/O error, 7 wall-clock limit.

mod initial;
mod requests;
mod runner;

pub use initial::{Basis, InitialKind, InitialSpec};
pub use requests::{CertificateKind, CertificateOutcome, CertificateRequest, ExactRequest};
pub use runner::{
    aggregate, exit_status_for, run_scenario, run_sweep, RunSummary, ScenarioOutcome, SweepRow, SweepTable,
};

use std::path::{Path, PathBuf};

use crate::dynamics::StepControl;
use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::mesh::{Bc, Grid};
use crate::models::{build_model, ModelSpec, Params};

/// Process exit status of a scenario run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok,
    Blowup,
    StabilityFloor,
    NumericalFailure,
    ConfigError,
    IoError,
    WallClock,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Ok => 0,
            ExitStatus::Blowup => 2,
            ExitStatus::StabilityFloor => 3,
            ExitStatus::NumericalFailure => 4,
            ExitStatus::ConfigError => 5,
            ExitStatus::IoError => 6,
            ExitStatus::WallClock => 7,
        }
    }

    pub fn from_code(code: i32) -> Option<ExitStatus> {
        Some(match code {
            0 => ExitStatus::Ok,
            2 => ExitStatus::Blowup,
            3 => ExitStatus::StabilityFloor,
            4 => ExitStatus::NumericalFailure,
            5 => ExitStatus::ConfigError,
            6 => ExitStatus::IoError,
            7 => ExitStatus::WallClock,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// Parsed but unvalidated scenario text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

const SECTIONS: [&str; 7] = ["scenario", "grid", "model", "initial", "run", "exact", "sweep"];

fn is_certificate(name: &str) -> bool {
    name == "certificate" || name.strip_prefix("certificate.").is_some_and(|l| !l.is_empty())
}

impl Document {
    pub fn parse(text: &str) -> Result<Document> {
        let mut doc = Document::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or(Error::Parse { line, msg: "unterminated section header".into() })?
                    .trim()
                    .to_string();
                if !SECTIONS.contains(&name.as_str()) && !is_certificate(&name) {
                    return Err(Error::Parse { line, msg: format!("unknown section [{name}]") });
                }
                if doc.sections.iter().any(|s| s.name == name) {
                    return Err(Error::Parse { line, msg: format!("duplicate section [{name}]") });
                }
                doc.sections.push(Section { name, line, entries: Vec::new() });
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(Error::Parse {
                line,
                msg: format!("expected `key = value`, got `{body}`"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse { line, msg: "empty key".into() });
            }
            let sec = doc.sections.last_mut().ok_or(Error::Parse {
                line,
                msg: format!("`{key}` appears before any section header"),
            })?;
            if sec.entries.iter().any(|e| e.key == key) {
                return Err(Error::Parse { line, msg: format!("duplicate key `{key}`") });
            }
            sec.entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Replaces `section.key` (or one list entry of it) with `value`.
    pub fn set(&mut self, section: &str, key: &str, index: Option<usize>, value: &str) -> Result<()> {
        let sec = match self.sections.iter_mut().find(|s| s.name == section) {
            Some(s) => s,
            None => {
                self.sections.push(Section { name: section.to_string(), line: 0, entries: Vec::new() });
                self.sections.last_mut().expect("just pushed")
            }
        };
        match (sec.entries.iter_mut().find(|e| e.key == key), index) {
            (Some(e), None) => e.value = value.to_string(),
            (Some(e), Some(i)) => {
                let mut items: Vec<String> = e.value.split(',').map(|s| s.trim().to_string()).collect();
                if i >= items.len() {
                    return Err(Error::Parse {
                        line: e.line,
                        msg: format!("`{key}` has no entry {i}"),
                    });
                }
                items[i] = value.to_string();
                e.value = items.join(", ");
            }
            (None, None) => sec.entries.push(Entry { key: key.to_string(), value: value.to_string(), line: 0 }),
            (None, Some(_)) => {
                return Err(Error::Config(format!("cannot index missing key `{section}.{key}`")));
            }
        }
        Ok(())
    }

    pub fn remove_section(&mut self, name: &str) {
        self.sections.retain(|s| s.name != name);
    }

    fn params(sec: &Section, skip: &[&str]) -> Result<Params> {
        let mut p = Params::new();
        for e in sec.entries.iter().filter(|e| !skip.contains(&e.key.as_str())) {
            p.insert(&e.key, &e.value, e.line)?;
        }
        Ok(p)
    }
}

/// Remaps "missing key" errors (reported at line 0) to the section header.
pub(crate) fn at_section<T>(sec: &Section, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line: 0, msg } => Error::Parse {
            line: sec.line,
            msg: format!("[{}] {msg}", sec.name),
        },
        Error::Config(msg) | Error::Precondition(msg) | Error::Evaluation(msg) => Error::Parse {
            line: sec.line,
            msg: format!("[{}] {msg}", sec.name),
        },
        other => other,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub t_end: f64,
    pub threshold: f64,
    pub control: StepControl,
    pub output_interval: f64,
    pub functionals: Vec<Functional>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub section: String,
    pub key: String,
    pub index: Option<usize>,
    pub values: Vec<String>,
}

impl SweepAxis {
    pub fn param(&self) -> String {
        match self.index {
            Some(i) => format!("{}.{}[{i}]", self.section, self.key),
            None => format!("{}.{}", self.section, self.key),
        }
    }
}

/// A fully validated scenario.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: Option<Grid>,
    pub model: Option<ModelSpec>,
    pub initial: Option<InitialSpec>,
    pub run: Option<RunSpec>,
    pub certificates: Vec<CertificateRequest>,
    pub exact: Option<ExactRequest>,
    pub sweep: Option<SweepAxis>,
    pub output: PathBuf,
    pub seed: u64,
    /// Per-run wall-clock limit in seconds.
    pub max_wall: Option<f64>,
    /// Directory that relative file paths resolve against.
    pub base_dir: Option<PathBuf>,
    doc: Document,
    model_entries: Vec<(String, String)>,
}

fn parse_bcs(text: &str, dim: usize, line: usize) -> Result<Vec<[Bc; 2]>> {
    let bad = |e: Error| Error::Parse { line, msg: e.to_string() };
    let items: Vec<&str> = text.split(',').map(str::trim).collect();
    let pair = |t: &str| -> Result<[Bc; 2]> {
        match t.split_once('/') {
            Some((lo, hi)) => Ok([Bc::parse(lo).map_err(bad)?, Bc::parse(hi).map_err(bad)?]),
            None => {
                let b = Bc::parse(t).map_err(bad)?;
                Ok([b, b])
            }
        }
    };
    match items.len() {
        1 => Ok(vec![pair(items[0])?; dim]),
        n if n == dim => items.iter().map(|t| pair(t)).collect(),
        n => Err(Error::Parse {
            line,
            msg: format!("`bc` needs 1 or {dim} entries, got {n}"),
        }),
    }
}

fn bc_text(bcs: &[[Bc; 2]]) -> String {
    let items: Vec<String> = bcs
        .iter()
        .map(|[lo, hi]| if lo == hi { lo.key() } else { format!("{}/{}", lo.key(), hi.key()) })
        .collect();
    items.join(", ")
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn parse_grid(sec: &Section) -> Result<Grid> {
    let p = Document::params(sec, &[])?;
    let g = at_section(sec, (|| {
        let extent = p.req_vec("extent")?;
        let dim = extent.len();
        let mut cells = p.usize_vec("cells")?.ok_or(Error::Parse { line: 0, msg: "missing required key `cells`".into() })?;
        if cells.len() == 1 {
            cells = vec![cells[0]; dim];
        }
        let origin = p.vec("origin")?.unwrap_or_else(|| vec![0.0; dim]);
        let bc_line = p.line_of("bc");
        let bcs = parse_bcs(p.str("bc").unwrap_or("dirichlet"), dim, bc_line)?;
        Grid::new(&origin, &extent, &cells, &bcs).map_err(|e| match e {
            Error::Config(msg) => Error::Parse { line: p.line_of("extent"), msg },
            other => other,
        })
    })())?;
    p.finish("grid")?;
    Ok(g)
}

fn parse_run(sec: &Section) -> Result<RunSpec> {
    let p = Document::params(sec, &[])?;
    let spec = at_section(sec, (|| {
        let d = StepControl::default();
        let control = StepControl {
            safety: p.f64_or("safety", d.safety)?,
            dt_min: p.f64_or("dt_min", d.dt_min)?,
            dt_max: p.f64_or("dt_max", d.dt_max)?,
            reaction_fraction: p.f64_or("reaction_fraction", d.reaction_fraction)?,
        };
        let functionals = match p.str("functionals") {
            None => Vec::new(),
            Some(list) => list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(Functional::parse)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Parse { line: p.line_of("functionals"), msg: e.to_string() })?,
        };
        let spec = RunSpec {
            t_end: p.req_f64("t_end")?,
            threshold: p.f64_or("threshold", 1e6)?,
            control,
            output_interval: p.f64_or("output_interval", 0.01)?,
            functionals,
        };
        let check = |ok: bool, key: &str, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Parse { line: p.line_of(key), msg: format!("`{key}` {msg}") })
            }
        };
        check(spec.t_end > 0.0 && spec.t_end.is_finite(), "t_end", "must be positive")?;
        check(spec.threshold > 0.0, "threshold", "must be positive")?;
        check(spec.control.safety > 0.0 && spec.control.safety <= 1.0, "safety", "must lie in (0, 1]")?;
        check(spec.control.dt_min > 0.0, "dt_min", "must be positive")?;
        check(spec.control.dt_max >= spec.control.dt_min, "dt_max", "must be ≥ dt_min")?;
        check(spec.control.reaction_fraction > 0.0, "reaction_fraction", "must be positive")?;
        check(spec.output_interval > 0.0, "output_interval", "must be positive")?;
        Ok(spec)
    })())?;
    p.finish("run")?;
    Ok(spec)
}

fn parse_sweep(sec: &Section) -> Result<SweepAxis> {
    let p = Document::params(sec, &[])?;
    let axis = at_section(sec, (|| {
        let param = p.req_str("param")?.trim().to_string();
        let line = p.line_of("param");
        let (section, rest) = param.split_once('.').ok_or(Error::Parse {
            line,
            msg: format!("sweep param `{param}` must look like section.key"),
        })?;
        let (key, index) = match rest.split_once('[') {
            Some((k, idx)) => {
                let i = idx
                    .strip_suffix(']')
                    .and_then(|s| s.trim().parse::<usize>().ok())
                    .ok_or(Error::Parse { line, msg: format!("bad index in `{param}`") })?;
                (k.to_string(), Some(i))
            }
            None => (rest.to_string(), None),
        };
        if section == "sweep" || !(SECTIONS.contains(&section) || is_certificate(section)) {
            return Err(Error::Parse { line, msg: format!("sweep cannot target section `{section}`") });
        }
        let values: Vec<String> = p
            .req_str("values")?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::Parse { line: p.line_of("values"), msg: "sweep values must be nonempty".into() });
        }
        Ok(SweepAxis { section: section.to_string(), key, index, values })
    })())?;
    p.finish("sweep")?;
    Ok(axis)
}

/// Parses and validates a scenario; sweep children are validated too.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let doc = Document::parse(text)?;
    let cfg = from_document(doc)?;
    cfg.sweep_children()?;
    Ok(cfg)
}

/// Reads a scenario file; relative paths inside resolve against its directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_scenario(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf);
    Ok(cfg)
}

fn from_document(doc: Document) -> Result<ScenarioConfig> {
    let (name, output, seed, max_wall) = match doc.section("scenario") {
        Some(sec) => {
            let p = Document::params(sec, &[])?;
            let out = at_section(sec, (|| {
                let seed = match p.str("seed") {
                    None => 0,
                    Some(s) => s.trim().parse::<u64>().map_err(|_| Error::Parse {
                        line: p.line_of("seed"),
                        msg: format!("`seed`: expected a non-negative integer, got `{s}`"),
                    })?,
                };
                let max_wall = p.f64("max_wall")?;
                if max_wall.is_some_and(|w| !(w > 0.0)) {
                    return Err(Error::Parse { line: p.line_of("max_wall"), msg: "`max_wall` must be positive".into() });
                }
                Ok((
                    p.str("name").unwrap_or("scenario").trim().to_string(),
                    PathBuf::from(p.str("output").unwrap_or("out").trim()),
                    seed,
                    max_wall,
                ))
            })())?;
            p.finish("scenario")?;
            out
        }
        None => ("scenario".to_string(), PathBuf::from("out"), 0, None),
    };

    let grid = doc.section("grid").map(parse_grid).transpose()?;
    let (model, model_entries) = match doc.section("model") {
        Some(sec) => {
            let p = Document::params(sec, &[])?;
            let m = at_section(sec, build_model(&p))?;
            if let Some(g) = &grid {
                m.diffusion.validate(Some(g.dim())).map_err(|e| Error::Parse {
                    line: p.line_of("diffusion"),
                    msg: e.to_string(),
                })?;
            }
            p.finish("model")?;
            let entries = sec.entries.iter().map(|e| (e.key.clone(), e.value.clone())).collect();
            (Some(m), entries)
        }
        None => (None, Vec::new()),
    };
    let initial = match doc.section("initial") {
        Some(sec) => {
            let model = model.as_ref().ok_or(Error::Parse { line: sec.line, msg: "[initial] needs a [model] section".into() })?;
            if grid.is_none() {
                return Err(Error::Parse { line: sec.line, msg: "[initial] needs a [grid] section".into() });
            }
            Some(InitialSpec::parse(sec, model.m())?)
        }
        None => None,
    };
    let run = match doc.section("run") {
        Some(sec) => {
            if initial.is_none() {
                return Err(Error::Parse { line: sec.line, msg: "[run] needs an [initial] section".into() });
            }
            Some(parse_run(sec)?)
        }
        None => None,
    };
    let mut certificates = Vec::new();
    for sec in doc.sections.iter().filter(|s| is_certificate(&s.name)) {
        let req = CertificateRequest::parse(sec, model.as_ref())?;
        if req.kind.needs_initial() && initial.is_none() {
            return Err(Error::Parse {
                line: sec.line,
                msg: format!("[{}] needs an [initial] section", sec.name),
            });
        }
        certificates.push(req);
    }
    let exact = match doc.section("exact") {
        Some(sec) => {
            let (Some(model), Some(grid)) = (&model, &grid) else {
                return Err(Error::Parse { line: sec.line, msg: "[exact] needs [grid] and [model] sections".into() });
            };
            Some(ExactRequest::parse(sec, model, grid)?)
        }
        None => None,
    };
    let sweep = doc.section("sweep").map(parse_sweep).transpose()?;
    if run.is_none() && certificates.is_empty() && exact.is_none() {
        return Err(Error::Parse {
            line: 0,
            msg: "nothing to do: add a [run], [certificate] or [exact] section".into(),
        });
    }
    Ok(ScenarioConfig {
        name,
        grid,
        model,
        initial,
        run,
        certificates,
        exact,
        sweep,
        output,
        seed,
        max_wall,
        base_dir: None,
        doc,
        model_entries,
    })
}

impl ScenarioConfig {
    /// One config per sweep value, in declared order, without the sweep
    /// section. Empty without a sweep axis.
    pub fn sweep_children(&self) -> Result<Vec<ScenarioConfig>> {
        let Some(axis) = &self.sweep else {
            return Ok(Vec::new());
        };
        let line = self.doc.section("sweep").map(|s| s.line).unwrap_or(0);
        axis.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut doc = self.doc.clone();
                doc.remove_section("sweep");
                doc.set(&axis.section, &axis.key, axis.index, v)?;
                let mut child = from_document(doc).map_err(|e| Error::Parse {
                    line,
                    msg: format!("sweep value `{v}` ({}): {e}", axis.param()),
                })?;
                child.seed = self.seed;
                child.max_wall = self.max_wall;
                child.base_dir = self.base_dir.clone();
                child.output = self.output.join(format!("sweep_{i:02}"));
                child.name = format!("{}[{}={v}]", self.name, axis.param());
                Ok(child)
            })
            .collect()
    }

    /// The config with every default written out; parsing it back yields the
    /// same config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        s.push_str("[scenario]\n");
        s.push_str(&format!("name = {}\n", self.name));
        s.push_str(&format!("output = {}\n", self.output.display()));
        s.push_str(&format!("seed = {}\n", self.seed));
        if let Some(w) = self.max_wall {
            s.push_str(&format!("max_wall = {w}\n"));
        }
        if let Some(g) = &self.grid {
            s.push_str("\n[grid]\n");
            s.push_str(&format!("extent = {}\n", join(g.extent())));
            s.push_str(&format!("cells = {}\n", join(g.cells())));
            s.push_str(&format!("origin = {}\n", join(g.origin())));
            s.push_str(&format!("bc = {}\n", bc_text(g.bcs())));
        }
        if let Some(m) = &self.model {
            s.push_str("\n[model]\n");
            for (k, v) in &self.model_entries {
                s.push_str(&format!("{k} = {v}\n"));
            }
            if !self.model_entries.iter().any(|(k, _)| k == "k") {
                s.push_str(&format!("k = {}\n", m.k));
            }
            if !self.model_entries.iter().any(|(k, _)| k == "lambda_scale") {
                s.push_str(&format!("lambda_scale = {}\n", m.lambda_scale));
            }
        }
        if let Some(i) = &self.initial {
            s.push_str("\n[initial]\n");
            for (k, v) in i.entries() {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        if let Some(r) = &self.run {
            s.push_str("\n[run]\n");
            s.push_str(&format!("t_end = {}\n", r.t_end));
            s.push_str(&format!("threshold = {}\n", r.threshold));
            s.push_str(&format!("safety = {}\n", r.control.safety));
            s.push_str(&format!("dt_min = {}\n", r.control.dt_min));
            s.push_str(&format!("dt_max = {}\n", r.control.dt_max));
            s.push_str(&format!("reaction_fraction = {}\n", r.control.reaction_fraction));
            s.push_str(&format!("output_interval = {}\n", r.output_interval));
            let f: Vec<String> = r.functionals.iter().map(functional_key).collect();
            s.push_str(&format!("functionals = {}\n", f.join(", ")));
        }
        for c in &self.certificates {
            s.push_str(&format!("\n[{}]\n", c.section_name()));
            for (k, v) in c.entries() {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        if let Some(e) = &self.exact {
            s.push_str("\n[exact]\n");
            for (k, v) in e.entries() {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        if let Some(a) = &self.sweep {
            s.push_str("\n[sweep]\n");
            s.push_str(&format!("param = {}\n", a.param()));
            s.push_str(&format!("values = {}\n", a.values.join(", ")));
        }
        s
    }

    pub(crate) fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if path.is_relative() => b.join(path),
            _ => path.to_path_buf(),
        }
    }
}

fn functional_key(f: &Functional) -> String {
    match f {
        Functional::Mass(c) => format!("mass:{c}"),
        Functional::Bmo(s) => format!("bmo:{s}"),
        Functional::Slab(r) => format!("slab:{r}"),
        other => other.column(),
    }
}
