use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;

use super::{ExitStatus, ScenarioConfig};
use crate::dynamics::{run, RunOptions, Termination};
use crate::error::{Error, Result};
use crate::exact::fit_order;
use crate::mesh::FieldSet;

/// Per-run summary; written as `key = value` lines and read back by the
/// sweep aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub name: String,
    /// Termination label, `Evaluated` when nothing was integrated, or
    /// `Failed` with the error in `message`.
    pub termination: String,
    /// Blow-up time, or the final time of the run.
    pub time: Option<f64>,
    pub max_sup: Option<f64>,
    pub max_slab: Option<f64>,
    pub max_bmo: Option<f64>,
    /// Certified horizon of the first certificate that produced one.
    pub horizon: Option<f64>,
    pub verdicts: Vec<(String, String)>,
    /// Residual and mesh width of the finest grid at the first time.
    pub residual: Option<f64>,
    pub residual_h: Option<f64>,
    pub fitted_order: Option<f64>,
    pub exit: ExitStatus,
    pub message: Option<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

fn parse_opt(v: &str) -> Option<f64> {
    if v == "none" {
        None
    } else {
        v.parse().ok()
    }
}

impl RunSummary {
    fn empty(name: &str) -> RunSummary {
        RunSummary {
            name: name.to_string(),
            termination: "Evaluated".into(),
            time: None,
            max_sup: None,
            max_slab: None,
            max_bmo: None,
            horizon: None,
            verdicts: Vec::new(),
            residual: None,
            residual_h: None,
            fitted_order: None,
            exit: ExitStatus::Ok,
            message: None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("name = {}\n", self.name));
        s.push_str(&format!("termination = {}\n", self.termination));
        s.push_str(&format!("time = {}\n", opt(self.time)));
        if self.termination == "ReachedT" {
            s.push_str(&format!("note = no blow-up observed before T_end = {}\n", opt(self.time)));
        }
        s.push_str(&format!("max_sup = {}\n", opt(self.max_sup)));
        s.push_str(&format!("max_slab = {}\n", opt(self.max_slab)));
        s.push_str(&format!("max_bmo = {}\n", opt(self.max_bmo)));
        s.push_str(&format!("horizon = {}\n", opt(self.horizon)));
        if let (Some(t), Some(h)) = (self.time, self.horizon) {
            if self.termination == "BlowupDetected" {
                s.push_str(&format!("tb_over_horizon = {}\n", t / h));
            }
        }
        for (label, v) in &self.verdicts {
            s.push_str(&format!("certificate.{label} = {v}\n"));
        }
        s.push_str(&format!("residual = {}\n", opt(self.residual)));
        s.push_str(&format!("residual_h = {}\n", opt(self.residual_h)));
        s.push_str(&format!("fitted_order = {}\n", opt(self.fitted_order)));
        if let Some(m) = &self.message {
            s.push_str(&format!("message = {}\n", m.replace('\n', " ")));
        }
        s.push_str(&format!("exit_code = {}\n", self.exit.code()));
        s
    }

    pub fn from_text(text: &str) -> Result<RunSummary> {
        let mut s = RunSummary::empty("");
        let mut seen_exit = false;
        for (i, line) in text.lines().enumerate() {
            let Some((k, v)) = line.split_once(" = ") else {
                continue;
            };
            match k {
                "name" => s.name = v.to_string(),
                "termination" => s.termination = v.to_string(),
                "time" => s.time = parse_opt(v),
                "max_sup" => s.max_sup = parse_opt(v),
                "max_slab" => s.max_slab = parse_opt(v),
                "max_bmo" => s.max_bmo = parse_opt(v),
                "horizon" => s.horizon = parse_opt(v),
                "residual" => s.residual = parse_opt(v),
                "residual_h" => s.residual_h = parse_opt(v),
                "fitted_order" => s.fitted_order = parse_opt(v),
                "message" => s.message = Some(v.to_string()),
                "exit_code" => {
                    s.exit = v
                        .parse()
                        .ok()
                        .and_then(ExitStatus::from_code)
                        .ok_or(Error::Parse { line: i + 1, msg: format!("bad exit code `{v}`") })?;
                    seen_exit = true;
                }
                _ => {
                    if let Some(label) = k.strip_prefix("certificate.") {
                        s.verdicts.push((label.to_string(), v.to_string()));
                    }
                }
            }
        }
        if !seen_exit {
            return Err(Error::Parse { line: 0, msg: "summary has no exit_code".into() });
        }
        Ok(s)
    }
}

/// Result of [`run_scenario`].
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub exit: ExitStatus,
    pub summary: RunSummary,
    pub artifacts: Vec<PathBuf>,
    /// Present for sweeps.
    pub sweep: Option<SweepTable>,
}

pub fn exit_status_for(err: &Error) -> ExitStatus {
    match err {
        Error::Io { .. } => ExitStatus::IoError,
        _ => ExitStatus::ConfigError,
    }
}

fn write(path: PathBuf, text: &str, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    artifacts.push(path);
    Ok(())
}

fn column_max(series: &crate::functionals::DiagnosticsSeries, prefix: &str) -> Option<f64> {
    let cols: Vec<&String> = series.columns.iter().filter(|c| c.starts_with(prefix)).collect();
    if cols.is_empty() {
        return None;
    }
    cols.iter()
        .filter_map(|c| series.column(c))
        .flatten()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
}

/// Runs a scenario (or its sweep) and writes its artifacts under
/// `cfg.output`:
///
/// - `config.txt`: the echoed config with defaults;
/// - `certificate_<label>.txt` (and `.csv` for falsifiers);
/// - `diagnostics.csv`: `time,dt,sup,<functional columns>`;
/// - `residuals.csv`: `grid,time,residual,fitted_order,fd_time`;
/// - `summary.txt`: [`RunSummary`] as `key = value` lines.
///
/// Everything that can fail on configuration is checked before the output
/// directory is touched.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    if cfg.sweep.is_some() {
        return run_sweep(cfg);
    }
    let u0: Option<FieldSet> = match (&cfg.initial, &cfg.grid) {
        (Some(init), Some(grid)) => Some(init.build(grid, cfg.seed, &|p: &Path| cfg.resolve(p))?),
        _ => None,
    };
    if let (Some(e), Some(g)) = (&cfg.exact, &cfg.grid) {
        e.study_grids(g)?;
    }

    let out = &cfg.output;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut artifacts = Vec::new();
    write(out.join("config.txt"), &cfg.echo(), &mut artifacts)?;
    let mut summary = RunSummary::empty(&cfg.name);

    for req in &cfg.certificates {
        let res = req.evaluate(cfg.model.as_ref(), u0.as_ref(), cfg.seed)?;
        write(out.join(format!("certificate_{}.txt", res.label)), &res.text, &mut artifacts)?;
        if let Some(csv) = &res.csv {
            write(out.join(format!("certificate_{}.csv", res.label)), csv, &mut artifacts)?;
        }
        if summary.horizon.is_none() {
            summary.horizon = res.horizon;
        }
        summary.verdicts.push((res.label.clone(), res.verdict.clone()));
    }

    if let (Some(e), Some(model), Some(grid)) = (&cfg.exact, &cfg.model, &cfg.grid) {
        let table = e.evaluate(model, grid)?;
        write(out.join("residuals.csv"), &table.to_csv(), &mut artifacts)?;
        let t0 = e.times[0];
        if let Some(row) = table.rows.iter().filter(|r| r.time == t0).last() {
            summary.residual = Some(row.residual);
            summary.residual_h = Some(row.h);
        }
        summary.fitted_order = table.order_at(t0);
    }

    if let (Some(spec), Some(model), Some(w0)) = (&cfg.run, &cfg.model, u0) {
        let opts = RunOptions {
            control: spec.control.clone(),
            threshold: spec.threshold,
            output_interval: spec.output_interval,
            functionals: spec.functionals.clone(),
            max_wall: cfg.max_wall.map(Duration::from_secs_f64),
        };
        let report = run(model, w0, spec.t_end, &opts)?;
        write(out.join("diagnostics.csv"), &report.diagnostics.to_csv(), &mut artifacts)?;
        summary.termination = report.termination.label().to_string();
        summary.exit = match report.termination {
            Termination::ReachedT => ExitStatus::Ok,
            Termination::BlowupDetected { .. } => ExitStatus::Blowup,
            Termination::StabilityFloor { .. } => ExitStatus::StabilityFloor,
            Termination::NumericalFailure { .. } => ExitStatus::NumericalFailure,
            Termination::WallClock { .. } => ExitStatus::WallClock,
        };
        summary.time = Some(match report.termination {
            Termination::BlowupDetected { time, .. } => time,
            _ => report.state.time,
        });
        summary.max_sup = column_max(&report.diagnostics, "sup");
        summary.max_slab = column_max(&report.diagnostics, "slab_");
        summary.max_bmo = column_max(&report.diagnostics, "bmo_");
    }

    write(out.join("summary.txt"), &summary.to_text(), &mut artifacts)?;
    Ok(ScenarioOutcome {
        exit: summary.exit,
        summary,
        artifacts,
        sweep: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub summary: RunSummary,
    /// Order fitted over the residuals of this and every earlier row.
    pub fitted_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub param: String,
    pub rows: Vec<SweepRow>,
}

const SWEEP_COLUMNS: [&str; 10] = [
    "value",
    "termination",
    "time",
    "max_slab",
    "max_bmo",
    "max_sup",
    "horizon",
    "residual",
    "fitted_order",
    "exit_code",
];

impl SweepTable {
    fn cells(&self) -> Vec<Vec<String>> {
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_else(|| "-".into());
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.value.clone(),
                    r.summary.termination.clone(),
                    f(r.summary.time),
                    f(r.summary.max_slab),
                    f(r.summary.max_bmo),
                    f(r.summary.max_sup),
                    f(r.summary.horizon),
                    f(r.summary.residual),
                    r.fitted_order.map(|o| format!("{o:.4}")).unwrap_or_else(|| "-".into()),
                    r.summary.exit.code().to_string(),
                ]
            })
            .collect()
    }

    /// Columns `value,termination,time,max_slab,max_bmo,max_sup,horizon,residual,fitted_order,exit_code`.
    pub fn to_csv(&self) -> String {
        let mut s = SWEEP_COLUMNS.join(",");
        s.push('\n');
        for row in self.cells() {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let mut widths: Vec<usize> = SWEEP_COLUMNS.iter().map(|c| c.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: Vec<String>| -> String {
            let parts: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut s = format!("sweep over {}\n", self.param);
        s.push_str(&line(SWEEP_COLUMNS.iter().map(|c| c.to_string()).collect()));
        for row in cells {
            s.push_str(&line(row));
        }
        s
    }
}

/// Folds child summaries into a table, in the given order.
pub fn aggregate(param: &str, children: &[(String, RunSummary)]) -> SweepTable {
    let mut pts = Vec::new();
    let rows = children
        .iter()
        .map(|(value, s)| {
            if let (Some(h), Some(r)) = (s.residual_h, s.residual) {
                pts.push((h, r));
            }
            SweepRow {
                value: value.clone(),
                summary: s.clone(),
                fitted_order: fit_order(&pts),
            }
        })
        .collect();
    SweepTable {
        param: param.to_string(),
        rows,
    }
}

/// Runs every sweep child in parallel (each in its own directory), then
/// writes `sweep_summary.txt` and `sweep_summary.csv`. A failing child is
/// recorded in its row and the sweep continues.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let axis = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Precondition("scenario has no sweep axis".into()))?;
    let children = cfg.sweep_children()?;
    let out = &cfg.output;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut artifacts = Vec::new();
    write(out.join("config.txt"), &cfg.echo(), &mut artifacts)?;

    let results: Vec<(ExitStatus, Vec<PathBuf>)> = children
        .par_iter()
        .map(|child| match run_scenario(child) {
            Ok(o) => (o.exit, o.artifacts),
            Err(e) => {
                let mut s = RunSummary::empty(&child.name);
                s.termination = "Failed".into();
                s.exit = exit_status_for(&e);
                s.message = Some(e.to_string());
                let _ = fs::create_dir_all(&child.output);
                let path = child.output.join("summary.txt");
                let arts = match fs::write(&path, s.to_text()) {
                    Ok(()) => vec![path],
                    Err(_) => Vec::new(),
                };
                (s.exit, arts)
            }
        })
        .collect();

    let mut rows = Vec::new();
    for ((child, value), (_, arts)) in children.iter().zip(&axis.values).zip(results) {
        artifacts.extend(arts);
        let path = child.output.join("summary.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        rows.push((value.clone(), RunSummary::from_text(&text)?));
    }
    let table = aggregate(&axis.param(), &rows);
    write(out.join("sweep_summary.txt"), &table.to_text(), &mut artifacts)?;
    write(out.join("sweep_summary.csv"), &table.to_csv(), &mut artifacts)?;
    let mut summary = RunSummary::empty(&cfg.name);
    summary.termination = "Sweep".into();
    Ok(ScenarioOutcome {
        exit: ExitStatus::Ok,
        summary,
        artifacts,
        sweep: Some(table),
    })
}

#[cfg(test)]
mod tests {
    use super::super::parse_scenario;
    use super::*;

    fn scenario(out: &Path, body: &str) -> ScenarioConfig {
        let text = format!("[scenario]\nname = t\noutput = {}\n{body}", out.display());
        parse_scenario(&text).unwrap()
    }

    const HEAT: &str = "\
[grid]
extent = 1
cells = 32
[model]
diffusion = identity
[initial]
kind = trig
modes = 1, 3
amplitudes = 1, 0.5
[run]
t_end = 0.05
functionals = l2
";

    #[test]
    fn heat_run_is_ok_with_monotone_l2() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = scenario(dir.path(), HEAT);
        let o = run_scenario(&cfg).unwrap();
        assert_eq!(o.exit, ExitStatus::Ok);
        let csv = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        assert_eq!(header, ["time", "dt", "sup", "l2"]);
        let l2: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
        assert!(l2.len() > 3);
        assert!(l2.windows(2).all(|w| w[1] <= w[0]));
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains("no blow-up observed"));
        assert!(dir.path().join("config.txt").exists());
    }

    #[test]
    fn summary_round_trips() {
        let mut s = RunSummary::empty("x");
        s.termination = "BlowupDetected".into();
        s.time = Some(0.25);
        s.horizon = Some(0.3);
        s.verdicts.push(("0".into(), "BlowupCertified".into()));
        s.exit = ExitStatus::Blowup;
        assert_eq!(RunSummary::from_text(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn sweep_rows_follow_declared_order() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEAT}[sweep]\nparam = run.t_end\nvalues = 0.02, 0.01, 0.03\n");
        let cfg = scenario(dir.path(), &body);
        let o = run_scenario(&cfg).unwrap();
        let t = o.sweep.unwrap();
        let vals: Vec<&str> = t.rows.iter().map(|r| r.value.as_str()).collect();
        assert_eq!(vals, ["0.02", "0.01", "0.03"]);
        let times: Vec<f64> = t.rows.iter().map(|r| r.summary.time.unwrap()).collect();
        assert_eq!(times, [0.02, 0.01, 0.03]);
        // re-aggregating from the stored child summaries gives the same table
        let stored: Vec<(String, RunSummary)> = (0..3)
            .map(|i| {
                let p = dir.path().join(format!("sweep_{i:02}/summary.txt"));
                (vals[i].to_string(), RunSummary::from_text(&fs::read_to_string(p).unwrap()).unwrap())
            })
            .collect();
        assert_eq!(aggregate("run.t_end", &stored), t);
        assert!(dir.path().join("sweep_summary.csv").exists());
    }

    #[test]
    fn failing_child_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let body = HEAT.replace("kind = trig\nmodes = 1, 3\namplitudes = 1, 0.5", "kind = eigenfunction")
            .replace("extent = 1\ncells = 32", "extent = 1\ncells = 32\nbc = dirichlet")
            + "[sweep]\nparam = grid.bc\nvalues = dirichlet, neumann\n";
        let cfg = scenario(dir.path(), &body);
        let t = run_scenario(&cfg).unwrap().sweep.unwrap();
        assert_eq!(t.rows[0].summary.exit, ExitStatus::Ok);
        assert_eq!(t.rows[1].summary.termination, "Failed");
        assert_eq!(t.rows[1].summary.exit, ExitStatus::ConfigError);
    }

    #[test]
    fn identical_runs_give_identical_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_scenario(&scenario(a.path(), HEAT)).unwrap();
        run_scenario(&scenario(b.path(), HEAT)).unwrap();
        for f in ["diagnostics.csv", "summary.txt"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }
}
