//! Forward-Euler integration of `W_t = Div(A(W)DW) + g(W)` with adaptive
//! step size, blow-up detection and diagnostics sampling.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{DiagnosticsSeries, Functional};
use crate::mesh::{divergence_form, gradient_padded, FieldSet, Padded};
use crate::mesh::TensorLayout;
use crate::models::{max_row_sum, ModelSpec, Reaction};
use crate::PAR_MIN;

/// A trajectory point.
#[derive(Clone, Debug)]
pub struct RunState {
    pub field: FieldSet,
    pub time: f64,
    pub steps: usize,
    pub dt_history: Vec<f64>,
}

impl RunState {
    pub fn new(field: FieldSet) -> RunState {
        RunState {
            time: field.time,
            field,
            steps: 0,
            dt_history: Vec::new(),
        }
    }
}

/// Why a run stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    ReachedT,
    BlowupDetected { time: f64, max: f64 },
    StabilityFloor { time: f64, dt: f64 },
    NumericalFailure { time: f64, component: usize, cell: usize },
    WallClock { time: f64 },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::ReachedT => "ReachedT",
            Termination::BlowupDetected { .. } => "BlowupDetected",
            Termination::StabilityFloor { .. } => "StabilityFloor",
            Termination::NumericalFailure { .. } => "NumericalFailure",
            Termination::WallClock { .. } => "WallClock",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub termination: Termination,
    pub diagnostics: DiagnosticsSeries,
    pub state: RunState,
}

impl RunReport {
    /// Plain-text summary block.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("termination: {}\n", self.termination.label()));
        match &self.termination {
            Termination::ReachedT => {
                s.push_str(&format!(
                    "note: no blow-up observed before T_end = {}\n",
                    self.state.time
                ));
            }
            Termination::BlowupDetected { time, max } => {
                s.push_str(&format!("blowup_time: {time}\nblowup_max: {max}\n"));
            }
            Termination::StabilityFloor { time, dt } => {
                s.push_str(&format!("floor_time: {time}\nfloor_dt: {dt}\n"));
            }
            Termination::NumericalFailure { time, component, cell } => {
                s.push_str(&format!(
                    "failure_time: {time}\nfailure_component: {component}\nfailure_cell: {cell}\n"
                ));
            }
            Termination::WallClock { time } => {
                s.push_str(&format!("stopped_at: {time}\n"));
            }
        }
        s.push_str(&format!("final_time: {}\n", self.state.time));
        s.push_str(&format!("steps: {}\n", self.state.steps));
        s.push_str(&format!("final_sup: {}\n", self.state.field.sup_norm()));
        s
    }
}

/// Step-size control.
#[derive(Clone, Debug, PartialEq)]
pub struct StepControl {
    /// CFL safety factor in (0, 1].
    pub safety: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Largest relative change `dt·|g| / (1 + |W|)` allowed per step.
    pub reaction_fraction: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            safety: 0.5,
            dt_min: 1e-12,
            dt_max: 0.1,
            reaction_fraction: 0.1,
        }
    }
}

/// Options for [`run`].
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub control: StepControl,
    pub threshold: f64,
    /// Diagnostics cadence Δt_out.
    pub output_interval: f64,
    pub functionals: Vec<Functional>,
    pub max_wall: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            control: StepControl::default(),
            threshold: 1e6,
            output_interval: 0.01,
            functionals: Vec::new(),
            max_wall: None,
        }
    }
}

const LAMBDA_FLOOR: f64 = 1e-12;

/// `Λ̂ = max over cells of the max row sum of |A(W)|`.
pub fn tensor_bound(field: &FieldSet, model: &ModelSpec) -> f64 {
    let dim = field.grid().dim();
    let m = field.m();
    let tl = model.tensor_len(dim);
    let size = match model.layout() {
        TensorLayout::ComponentMatrix => m,
        TensorLayout::FullTensor => m * dim,
    };
    (0..field.n_cells())
        .into_par_iter()
        .with_min_len(PAR_MIN)
        .map_init(
            || (vec![0.0; m], vec![0.0; tl]),
            |(w, a), cell| {
                field.state_at(cell, w);
                model.diffusion.eval_into(w, a);
                max_row_sum(a, size)
            },
        )
        .reduce(|| 0.0, f64::max)
}

fn reaction_field(field: &FieldSet, padded: Option<&Padded>, model: &ModelSpec) -> Vec<f64> {
    let n = field.n_cells();
    let m = field.m();
    let dim = field.grid().dim();
    let dw = if model.reaction.needs_gradient() {
        Some(gradient_padded(padded.expect("padding for gradient reaction")))
    } else {
        None
    };
    let mut per_cell = vec![0.0; n * m];
    per_cell
        .par_chunks_mut(m)
        .with_min_len(PAR_MIN)
        .enumerate()
        .for_each_init(
            || (vec![0.0; m], vec![0.0; m * dim]),
            |(w, g), (cell, out)| {
                field.state_at(cell, w);
                let grad = dw.as_ref().map(|d| {
                    for c in 0..m {
                        for a in 0..dim {
                            g[c * dim + a] = d.get(c, a, cell);
                        }
                    }
                    &g[..]
                });
                model.reaction.eval_into(w, grad, out);
            },
        );
    // cell-major → component-major
    let mut g = vec![0.0; n * m];
    for cell in 0..n {
        for c in 0..m {
            g[c * n + cell] = per_cell[cell * m + c];
        }
    }
    g
}

/// Explicit stable step `safety · min h² / (2 · dim · Λ̂)`, capped at `dt_max`
/// and by the reaction limiter. `Λ̂` is floored at 1e−12. The value may fall
/// below `dt_min`; [`run`] reports that as a stability floor.
pub fn stable_dt(state: &RunState, model: &ModelSpec, control: &StepControl) -> f64 {
    let g = state.field.grid();
    let h = g.min_spacing();
    let lam = tensor_bound(&state.field, model).max(LAMBDA_FLOOR);
    let mut dt = (control.safety * h * h / (2.0 * g.dim() as f64 * lam)).min(control.dt_max);
    if !matches!(model.reaction, Reaction::None) {
        let padded = model.reaction.needs_gradient().then(|| Padded::new(&state.field));
        let r = reaction_field(&state.field, padded.as_ref(), model);
        let n = state.field.n_cells();
        let m = state.field.m();
        let mut worst = 0.0f64;
        for cell in 0..n {
            let gn: f64 = (0..m).map(|c| r[c * n + cell].powi(2)).sum::<f64>().sqrt();
            let wn: f64 = (0..m)
                .map(|c| state.field.get(c, cell).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(gn / (1.0 + wn));
        }
        if worst > 0.0 {
            dt = dt.min(control.reaction_fraction / worst);
        }
    }
    dt
}

/// One forward-Euler step `W ← W + dt·(Div(A(W)DW) + g(W))`. Boundary values
/// enter through the ghost cells, so they hold after every step.
pub fn step(state: &RunState, model: &ModelSpec, dt: f64) -> Result<RunState> {
    let mut next = state.clone();
    advance(&mut next, model, dt)?;
    Ok(next)
}

fn advance(state: &mut RunState, model: &ModelSpec, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("time step {dt} must be positive")));
    }
    let padded = Padded::new(&state.field);
    let diffusion = &model.diffusion;
    let div = divergence_form(&padded, model.layout(), |w, out| diffusion.eval_into(w, out));
    let react = !matches!(model.reaction, Reaction::None);
    let g = if react {
        reaction_field(&state.field, Some(&padded), model)
    } else {
        Vec::new()
    };
    let mut next = state.field.values().to_vec();
    next.par_iter_mut()
        .with_min_len(PAR_MIN)
        .zip(div.values().par_iter())
        .enumerate()
        .for_each(|(i, (v, d))| {
            let rhs = if react { d + g[i] } else { *d };
            *v += dt * rhs;
        });
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        let n = state.field.n_cells();
        return Err(Error::NonFinite {
            component: i / n,
            cell: i % n,
        });
    }
    state.field.values_mut().copy_from_slice(&next);
    state.time += dt;
    state.field.time = state.time;
    state.steps += 1;
    state.dt_history.push(dt);
    Ok(())
}

/// True iff `sup|W| ≥ threshold` or some value is not finite.
pub fn detect_blowup(state: &RunState, threshold: f64) -> bool {
    let s = state.field.sup_norm();
    !(s < threshold)
}

fn sample(
    state: &RunState,
    dt: f64,
    model: &ModelSpec,
    functionals: &[Functional],
    series: &mut DiagnosticsSeries,
) -> Result<()> {
    let mut row = vec![dt, state.field.sup_norm()];
    for f in functionals {
        row.push(f.eval(&state.field, model)?);
    }
    if series.rows.last().is_some_and(|(t, _)| *t >= state.time) {
        return Ok(());
    }
    series.push(state.time, row)
}

/// Column names written by [`run`] after `time`.
pub fn diagnostic_columns(functionals: &[Functional]) -> Vec<String> {
    let mut cols = vec!["dt".to_string(), "sup".to_string()];
    cols.extend(functionals.iter().map(|f| f.column()));
    cols
}

/// Integrates from `w0` until `t_end` or another termination cause.
///
/// Steps are shortened to land on every multiple of the output interval and
/// on `t_end`; the shortened step is never compared with `dt_min`.
pub fn run(model: &ModelSpec, w0: FieldSet, t_end: f64, opts: &RunOptions) -> Result<RunReport> {
    if w0.m() != model.m() {
        return Err(Error::Shape(format!(
            "initial data has {} components, model has {}",
            w0.m(),
            model.m()
        )));
    }
    model.diffusion.validate(Some(w0.grid().dim()))?;
    if !(t_end > w0.time) {
        return Err(Error::Precondition(format!(
            "T_end = {t_end} must exceed the start time {}",
            w0.time
        )));
    }
    if !(opts.output_interval > 0.0) {
        return Err(Error::Config("output interval must be positive".into()));
    }
    let c = &opts.control;
    if !(c.safety > 0.0 && c.safety <= 1.0) || !(c.dt_min > 0.0) || !(c.dt_max >= c.dt_min) {
        return Err(Error::Config(format!(
            "step control needs 0 < safety ≤ 1 and 0 < dt_min ≤ dt_max, got {c:?}"
        )));
    }
    let started = Instant::now();
    let t0 = w0.time;
    let mut state = RunState::new(w0);
    let mut series = DiagnosticsSeries::new(diagnostic_columns(&opts.functionals));
    sample(&state, 0.0, model, &opts.functionals, &mut series)?;
    let mut k_out = 1usize;
    let mut last_dt = 0.0;

    let termination = loop {
        if let Some((component, cell)) = state.field.first_non_finite() {
            break Termination::NumericalFailure {
                time: state.time,
                component,
                cell,
            };
        }
        if detect_blowup(&state, opts.threshold) {
            break Termination::BlowupDetected {
                time: state.time,
                max: state.field.sup_norm(),
            };
        }
        if state.time >= t_end {
            break Termination::ReachedT;
        }
        if opts.max_wall.is_some_and(|limit| started.elapsed() >= limit) {
            break Termination::WallClock { time: state.time };
        }
        let dt_stable = stable_dt(&state, model, c);
        if !(dt_stable >= c.dt_min) {
            break Termination::StabilityFloor {
                time: state.time,
                dt: dt_stable,
            };
        }
        let next_out = t0 + k_out as f64 * opts.output_interval;
        let target = next_out.min(t_end);
        let landing = state.time + dt_stable >= target;
        let dt = if landing { target - state.time } else { dt_stable };
        match advance(&mut state, model, dt) {
            Ok(()) => {}
            Err(Error::NonFinite { component, cell }) => {
                break Termination::NumericalFailure {
                    time: state.time + dt,
                    component,
                    cell,
                }
            }
            Err(e) => return Err(e),
        };
        last_dt = dt;
        if landing {
            // pin the clock to the target so rounding never skips an output
            state.time = target;
            state.field.time = target;
            while t0 + k_out as f64 * opts.output_interval <= target * (1.0 + 1e-14) {
                k_out += 1;
            }
            if !detect_blowup(&state, opts.threshold) {
                sample(&state, dt, model, &opts.functionals, &mut series)?;
            }
        }
    };
    if !matches!(termination, Termination::NumericalFailure { .. }) {
        sample(&state, last_dt, model, &opts.functionals, &mut series)?;
    }
    Ok(RunReport {
        termination,
        diagnostics: series,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{lp_norm, Functional};
    use crate::mesh::{integrate, Bc, Grid};
    use crate::models::{Diffusion, Reaction};
    use std::f64::consts::PI;

    fn heat(m: usize) -> ModelSpec {
        let mut matrix = vec![0.0; m * m];
        (0..m).for_each(|i| matrix[i * m + i] = 1.0);
        ModelSpec::new(Diffusion::Constant { m, matrix }, Reaction::None).unwrap()
    }

    #[test]
    fn stable_dt_arithmetic() {
        let g = Grid::boxed(&[1.0, 1.0], &[10, 10], Bc::NeumannZero).unwrap();
        let s = RunState::new(FieldSet::zeros(&g, 1));
        let dt = stable_dt(&s, &heat(1), &StepControl { dt_max: 1.0, ..Default::default() });
        assert!((dt - 0.00125).abs() < 1e-15, "{dt}");
    }

    #[test]
    fn degenerate_tensor_hits_dt_max() {
        let g = Grid::boxed(&[1.0], &[10], Bc::DirichletZero).unwrap();
        let s = RunState::new(FieldSet::zeros(&g, 1));
        let model = ModelSpec::new(Diffusion::DiagonalPowerLaw { exps: vec![2.0] }, Reaction::None).unwrap();
        let control = StepControl::default();
        assert_eq!(stable_dt(&s, &model, &control), control.dt_max);
    }

    #[test]
    fn skt_dt_scales_inversely_with_amplitude() {
        let g = Grid::boxed(&[1.0, 1.0], &[8, 8], Bc::NeumannZero).unwrap();
        let model = ModelSpec::new(
            Diffusion::Skt { d: vec![1e-3, 1e-3], alpha: vec![1.0, 0.5, 0.5, 1.0] },
            Reaction::None,
        )
        .unwrap();
        let base = FieldSet::from_fn(&g, 2, |x, w| {
            w[0] = 5.0 + 5.0 * x[0];
            w[1] = 5.0 + 5.0 * x[1];
        });
        let control = StepControl { dt_max: 1.0, ..Default::default() };
        let a = stable_dt(&RunState::new(base.clone()), &model, &control);
        let b = stable_dt(&RunState::new(base.map(|v| 2.0 * v)), &model, &control);
        assert!((a / b - 2.0).abs() < 1e-3, "{}", a / b);
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let g = Grid::boxed(&[1.0, 1.0], &[6, 6], Bc::DirichletZero).unwrap();
        let s = RunState::new(FieldSet::zeros(&g, 2));
        let next = step(&s, &heat(2), 1e-3).unwrap();
        assert!(next.field.values().iter().all(|v| *v == 0.0));
        assert_eq!(next.steps, 1);
        assert_eq!(next.dt_history, vec![1e-3]);
    }

    #[test]
    fn heat_step_tracks_exponential_decay() {
        let n = 200;
        let g = Grid::boxed(&[1.0], &[n], Bc::DirichletZero).unwrap();
        let s = RunState::new(FieldSet::scalar(&g, |x| (PI * x[0]).sin()));
        let h = 1.0 / n as f64;
        let dt = 0.25 * h * h;
        let next = step(&s, &heat(1), dt).unwrap();
        let decay = (-PI * PI * dt).exp();
        let mut err = 0.0f64;
        for cell in 0..n {
            let x = g.center(cell)[0];
            err = err.max((next.field.get(0, cell) - decay * (PI * x).sin()).abs());
        }
        // one step carries dt·O(h²) spatial and O(dt²) temporal error
        assert!(err < dt * 5.0 * h * h + 10.0 * dt * dt, "{err}");
    }

    #[test]
    fn slab_invariant_data_stays_invariant() {
        let bcs = [[Bc::DirichletZero; 2], [Bc::Periodic; 2], [Bc::NeumannZero; 2]];
        let g = Grid::new(&[0.0; 3], &[1.0, 1.0, 0.1], &[8, 8, 4], &bcs).unwrap();
        let f = FieldSet::from_fn(&g, 2, |x, w| {
            w[0] = (PI * x[0]).sin() * (1.0 + 0.3 * (2.0 * PI * x[1]).cos());
            w[1] = x[0] * (1.0 - x[0]);
        });
        let model = ModelSpec::new(
            Diffusion::Skt { d: vec![1.0, 0.5], alpha: vec![0.2, 0.4, 0.1, 0.3] },
            Reaction::None,
        )
        .unwrap();
        let next = step(&RunState::new(f), &model, 1e-4).unwrap();
        for c in 0..2 {
            for i in 0..8 {
                for j in 0..8 {
                    let v0 = next.field.get(c, g.ravel([i, j, 0]));
                    for k in 1..4 {
                        assert!((next.field.get(c, g.ravel([i, j, k])) - v0).abs() <= 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn detect_blowup_cases() {
        let g = Grid::boxed(&[1.0], &[4], Bc::NeumannZero).unwrap();
        let ones = RunState::new(FieldSet::scalar(&g, |_| 1.0));
        assert!(!detect_blowup(&ones, 1e6));
        let mut spike = ones.clone();
        spike.field.values_mut()[2] = 1e7;
        assert!(detect_blowup(&spike, 1e6));
        let mut nan = ones;
        nan.field.values_mut()[1] = f64::NAN;
        assert!(detect_blowup(&nan, 1e6));
    }

    #[test]
    fn pure_diffusion_reaches_t_with_decreasing_l2() {
        let g = Grid::boxed(&[1.0], &[64], Bc::DirichletZero).unwrap();
        let w0 = FieldSet::scalar(&g, |x| (PI * x[0]).sin() + 0.3 * (3.0 * PI * x[0]).sin());
        let opts = RunOptions {
            functionals: vec![Functional::L2],
            output_interval: 0.01,
            ..Default::default()
        };
        let rep = run(&heat(1), w0, 0.2, &opts).unwrap();
        assert_eq!(rep.termination, Termination::ReachedT);
        assert_eq!(rep.state.time, 0.2);
        let l2 = rep.diagnostics.column("l2").unwrap();
        assert_eq!(l2.len(), 21);
        assert!(l2.windows(2).all(|p| p[1] < p[0]));
        let total: f64 = rep.state.dt_history.iter().sum();
        assert!((total - rep.state.time).abs() < 1e-12);
    }

    #[test]
    fn power_sink_keeps_l2_non_increasing() {
        let g = Grid::boxed(&[1.0, 1.0], &[16, 16], Bc::NeumannZero).unwrap();
        let w0 = FieldSet::scalar(&g, |x| 3.0 * (PI * x[0]).cos() * (PI * x[1]).cos() + 1.0);
        let model = ModelSpec::new(
            Diffusion::Constant { m: 1, matrix: vec![1.0] },
            Reaction::PowerLaw { coef: -1.0, power: 1.0 },
        )
        .unwrap();
        let opts = RunOptions {
            functionals: vec![Functional::L2Squared],
            output_interval: 0.05,
            ..Default::default()
        };
        let rep = run(&model, w0, 1.0, &opts).unwrap();
        assert_eq!(rep.termination, Termination::ReachedT);
        let e = rep.diagnostics.column("l2sq").unwrap();
        assert!(e.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn superlinear_source_blows_up() {
        let g = Grid::boxed(&[1.0], &[16], Bc::NeumannZero).unwrap();
        let w0 = FieldSet::scalar(&g, |_| 1.0);
        let model = ModelSpec::new(
            Diffusion::Constant { m: 1, matrix: vec![1.0] },
            Reaction::PowerLaw { coef: 1.0, power: 1.0 },
        )
        .unwrap();
        let opts = RunOptions {
            control: StepControl { dt_min: 1e-16, ..Default::default() },
            ..Default::default()
        };
        let rep = run(&model, w0, 5.0, &opts).unwrap();
        // u' = u², u(0) = 1 blows up at t = 1
        match rep.termination {
            Termination::BlowupDetected { time, max } => {
                assert!(max >= 1e6);
                assert!((time - 1.0).abs() < 0.05, "{time}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn neumann_mass_is_conserved() {
        let g = Grid::boxed(&[1.0, 2.0], &[12, 16], Bc::NeumannZero).unwrap();
        let w0 = FieldSet::scalar(&g, |x| 1.0 + x[0] * x[1] + (x[0] * 5.0).sin());
        let model = ModelSpec::new(
            Diffusion::Skt { d: vec![1.0], alpha: vec![0.5] },
            Reaction::None,
        )
        .unwrap();
        let m0 = integrate(&g, w0.values());
        let rep = run(&model, w0, 0.1, &RunOptions::default()).unwrap();
        let m1 = integrate(&g, rep.state.field.values());
        assert!((m1 - m0).abs() <= 1e-12 * 0.1 * m0.abs().max(1.0), "{}", m1 - m0);
    }

    #[test]
    fn mirror_symmetry_is_preserved() {
        let n = 20;
        let g = Grid::boxed(&[1.0], &[n], Bc::DirichletZero).unwrap();
        let w0 = FieldSet::scalar(&g, |x| (x[0] * (1.0 - x[0])).powi(2) * 10.0);
        let model = ModelSpec::new(
            Diffusion::DiagonalPowerLaw { exps: vec![2.0] },
            Reaction::PowerLaw { coef: 0.5, power: 1.0 },
        )
        .unwrap();
        let rep = run(&model, w0, 0.05, &RunOptions::default()).unwrap();
        let v = rep.state.field.values();
        for i in 0..n / 2 {
            assert!((v[i] - v[n - 1 - i]).abs() <= 1e-12 * v[i].abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = Grid::boxed(&[1.0], &[4], Bc::NeumannZero).unwrap();
        assert!(run(&heat(2), FieldSet::zeros(&g, 1), 1.0, &RunOptions::default()).is_err());
        assert!(run(&heat(1), FieldSet::zeros(&g, 1), 0.0, &RunOptions::default()).is_err());
        let s = RunState::new(FieldSet::zeros(&g, 1));
        assert!(step(&s, &heat(1), 0.0).is_err());
    }

    #[test]
    fn stability_floor_is_reported() {
        let g = Grid::boxed(&[1.0], &[16], Bc::NeumannZero).unwrap();
        let w0 = FieldSet::scalar(&g, |_| 1.0);
        let opts = RunOptions {
            control: StepControl { dt_min: 1.0, dt_max: 1.0, ..Default::default() },
            ..Default::default()
        };
        let rep = run(&heat(1), w0, 1.0, &opts).unwrap();
        assert!(matches!(rep.termination, Termination::StabilityFloor { .. }));
        assert!(lp_norm(&rep.state.field, 1.0).unwrap() > 0.0);
    }
}
