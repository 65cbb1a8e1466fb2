//! Closed-form reference solutions and evolution-residual checks.
//!
//! The bounded gradient-blow-up field `u = x / √(κ(1−t) + |x|²)` comes with
//! its diffusion tensor; separable solutions `h(t)·U₀(x)` of the degenerate
//! equation `W_t = Div(|W|^α DW) + ε₀|W|^α W` use a numerically computed
//! profile `U₀`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{divergence_form, gradient_padded, Bc, FieldSet, Grid, Padded};
use crate::models::{eval_diffusion, js_admissible, js_factor, Diffusion, DiffusionTensor, ModelSpec, Reaction, Weight};

/// `(x, t, out)` writes an m-vector.
pub type StateMap = Arc<dyn Fn(&[f64; 3], f64, &mut [f64]) + Send + Sync>;

/// A solution known in closed form (or on a fixed profile).
#[derive(Clone)]
pub struct ExactSolution {
    pub name: String,
    pub m: usize,
    pub state: StateMap,
    /// `∂_α u_c` written at `c * 3 + α`.
    pub gradient: Option<StateMap>,
    pub time_derivative: Option<StateMap>,
    /// Half-open `[t0, t1)`.
    pub window: (f64, f64),
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactSolution")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("gradient", &self.gradient.is_some())
            .field("time_derivative", &self.time_derivative.is_some())
            .field("window", &self.window)
            .finish()
    }
}

impl ExactSolution {
    pub fn check_time(&self, t: f64) -> Result<()> {
        if t >= self.window.0 && t < self.window.1 {
            Ok(())
        } else {
            Err(Error::Evaluation(format!(
                "{}: t = {t} outside validity window [{}, {})",
                self.name, self.window.0, self.window.1
            )))
        }
    }

    pub fn eval(&self, x: &[f64; 3], t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut out = vec![0.0; self.m];
        (self.state)(x, t, &mut out);
        Ok(out)
    }

    /// Samples the state on the cells of `grid`.
    pub fn sample(&self, grid: &Grid, t: f64) -> Result<FieldSet> {
        self.check_time(t)?;
        let f = &self.state;
        Ok(FieldSet::from_fn(grid, self.m, |x, w| f(x, t, w)))
    }

    /// `u_t` at every cell, analytic when available; the flag reports a
    /// central-difference fallback.
    fn time_derivative_on(&self, grid: &Grid, t: f64) -> Result<(FieldSet, bool)> {
        if let Some(ut) = &self.time_derivative {
            return Ok((FieldSet::from_fn(grid, self.m, |x, w| ut(x, t, w)), false));
        }
        let dt = 1e-5 * t.abs().max(1.0);
        let (lo, hi) = (t - dt, t + dt);
        let (lo, hi, span) = if lo < self.window.0 {
            (t, hi, dt)
        } else if hi >= self.window.1 {
            (lo, t, dt)
        } else {
            (lo, hi, 2.0 * dt)
        };
        self.check_time(lo)?;
        self.check_time(hi)?;
        let a = self.sample(grid, lo)?;
        let b = self.sample(grid, hi)?;
        let vals: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (y - x) / span).collect();
        Ok((FieldSet::from_values(grid, self.m, vals)?, true))
    }
}

/// State, Jacobian (row-major `D_j u_i`) and time derivative of the bounded
/// field `u = x/s`, `s = √(κ(1−t) + |x|²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JsState {
    pub u: [f64; 3],
    pub du: [[f64; 3]; 3],
    pub ut: [f64; 3],
}

/// `D_j u_i = δ_ij/s − x_i x_j/s³`, `u_t = κ x / (2 s³)`.
pub fn js_state(x: &[f64; 3], t: f64, kappa: f64) -> Result<JsState> {
    if !(kappa > 0.0) {
        return Err(Error::Precondition(format!("κ = {kappa} must be positive")));
    }
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let s2 = kappa * (1.0 - t) + r2;
    if !(s2 > f64::MIN_POSITIVE) || !s2.is_finite() {
        return Err(Error::Evaluation(format!(
            "denominator underflow at x = {x:?}, t = {t}"
        )));
    }
    let s = s2.sqrt();
    let s3 = s2 * s;
    let mut st = JsState {
        u: [0.0; 3],
        du: [[0.0; 3]; 3],
        ut: [0.0; 3],
    };
    for i in 0..3 {
        st.u[i] = x[i] / s;
        st.ut[i] = 0.5 * kappa * x[i] / s3;
        for j in 0..3 {
            st.du[i][j] = if i == j { 1.0 / s } else { 0.0 } - x[i] * x[j] / s3;
        }
    }
    Ok(st)
}

/// Full 9×9 tensor `θ δ_ij δ_αβ + A_iα A_jβ` at state `u`.
pub fn js_tensor(u: &[f64; 3], kappa: f64, theta: f64) -> Result<DiffusionTensor> {
    js_admissible(kappa, theta)?;
    js_factor(u, kappa, theta)?;
    let model = ModelSpec::new(Diffusion::JsTensor { kappa, theta }, Reaction::None)?;
    Ok(eval_diffusion(&model, u, 3))
}

/// The bounded field `x/√(κ(1−t)+|x|²)` on `t ∈ [0, 1)`.
pub fn js_solution(kappa: f64) -> Result<ExactSolution> {
    if !(kappa > 0.0) {
        return Err(Error::Precondition(format!("κ = {kappa} must be positive")));
    }
    let nan = |out: &mut [f64]| out.iter_mut().for_each(|v| *v = f64::NAN);
    Ok(ExactSolution {
        name: format!("js(kappa={kappa})"),
        m: 3,
        state: Arc::new(move |x, t, out| match js_state(x, t, kappa) {
            Ok(s) => out.copy_from_slice(&s.u),
            Err(_) => nan(out),
        }),
        gradient: Some(Arc::new(move |x, t, out| match js_state(x, t, kappa) {
            Ok(s) => {
                for i in 0..3 {
                    out[i * 3..i * 3 + 3].copy_from_slice(&s.du[i]);
                }
            }
            Err(_) => nan(out),
        })),
        time_derivative: Some(Arc::new(move |x, t, out| match js_state(x, t, kappa) {
            Ok(s) => out.copy_from_slice(&s.ut),
            Err(_) => nan(out),
        })),
        window: (0.0, 1.0),
    })
}

/// Time-independent `u_c(x) = b_c + Σ_α a_{c,α} x_α`; `slope` is
/// `(component, direction)` with three directions.
pub fn affine_solution(offset: Vec<f64>, slope: Vec<f64>) -> Result<ExactSolution> {
    let m = offset.len();
    if m == 0 || slope.len() != 3 * m {
        return Err(Error::Shape(format!(
            "affine solution needs 3·m slopes, got {} for m = {m}",
            slope.len()
        )));
    }
    let s2 = slope.clone();
    Ok(ExactSolution {
        name: "affine".into(),
        m,
        state: Arc::new(move |x, _, out| {
            for c in 0..m {
                out[c] = offset[c] + (0..3).map(|a| slope[c * 3 + a] * x[a]).sum::<f64>();
            }
        }),
        gradient: Some(Arc::new(move |_, _, out| out.copy_from_slice(&s2))),
        time_derivative: Some(Arc::new(move |_, _, out| out.iter_mut().for_each(|v| *v = 0.0))),
        window: (f64::NEG_INFINITY, f64::INFINITY),
    })
}

/// One `(grid, time)` evaluation of the evolution residual.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualRow {
    pub cells: Vec<usize>,
    pub h: f64,
    pub time: f64,
    pub residual: f64,
    /// `u_t` came from central differences.
    pub fd_time: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTable {
    pub rows: Vec<ResidualRow>,
    /// Least-squares slope of `log residual` against `log h`, per time; `None`
    /// with fewer than two grids or a vanishing residual.
    pub orders: Vec<(f64, Option<f64>)>,
}

impl ResidualTable {
    pub fn order_at(&self, time: f64) -> Option<f64> {
        self.orders.iter().find(|(t, _)| *t == time).and_then(|o| o.1)
    }

    /// Columns `grid,time,residual,fitted_order,fd_time`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("grid,time,residual,fitted_order,fd_time\n");
        for r in &self.rows {
            let grid: Vec<String> = r.cells.iter().map(|c| c.to_string()).collect();
            let order = self.order_at(r.time).map(|o| format!("{o:.6}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{:e},{:e},{},{}\n",
                grid.join("x"),
                r.time,
                r.residual,
                order,
                r.fd_time
            ));
        }
        s
    }
}

/// `‖u_t − Div(A(u)Du) − g(u)‖_{L²}` over the cells of `grid`, with ghost
/// values taken from the solution itself.
pub fn evolution_residual(model: &ModelSpec, sol: &ExactSolution, grid: &Grid, time: f64) -> Result<ResidualRow> {
    if model.m() != sol.m {
        return Err(Error::Shape(format!("model has {} components, solution {}", model.m(), sol.m)));
    }
    model.diffusion.validate(Some(grid.dim()))?;
    sol.check_time(time)?;
    let m = sol.m;
    let state = &sol.state;
    let padded = Padded::from_exact(grid, m, |x, w| state(x, time, w));
    let div = divergence_form(&padded, model.layout(), |w, out| model.diffusion.eval_into(w, out));
    let (ut, fd_time) = sol.time_derivative_on(grid, time)?;
    let n = grid.n_cells();
    let dim = grid.dim();
    let grad = model.reaction.needs_gradient().then(|| gradient_padded(&padded));
    let u = sol.sample(grid, time)?;

    let sq: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|cell| {
            let mut w = vec![0.0; m];
            let mut g = vec![0.0; m];
            u.state_at(cell, &mut w);
            let dw = grad.as_ref().map(|gr| {
                let mut d = vec![0.0; m * dim];
                for c in 0..m {
                    for a in 0..dim {
                        d[c * dim + a] = gr.get(c, a, cell);
                    }
                }
                d
            });
            model.reaction.eval_into(&w, dw.as_deref(), &mut g);
            (0..m)
                .map(|c| {
                    let r = ut.get(c, cell) - div.get(c, cell) - g[c];
                    r * r
                })
                .sum::<f64>()
        })
        .collect();
    let total = sq.iter().sum::<f64>() * grid.cell_volume();
    if !total.is_finite() {
        return Err(Error::Evaluation(format!("{}: non-finite residual at t = {time}", sol.name)));
    }
    Ok(ResidualRow {
        cells: grid.cells().to_vec(),
        h: grid.spacing().iter().cloned().fold(0.0, f64::max),
        time,
        residual: total.sqrt(),
        fd_time,
    })
}

/// Residuals over every `(grid, time)` pair with a fitted order per time.
pub fn residual_study(model: &ModelSpec, sol: &ExactSolution, grids: &[Grid], times: &[f64]) -> Result<ResidualTable> {
    if grids.is_empty() || times.is_empty() {
        return Err(Error::Precondition("residual study needs at least one grid and one time".into()));
    }
    let mut rows = Vec::new();
    let mut orders = Vec::new();
    for &t in times {
        let mut pts = Vec::new();
        for g in grids {
            let row = evolution_residual(model, sol, g, t)?;
            pts.push((row.h, row.residual));
            rows.push(row);
        }
        orders.push((t, fit_order(&pts)));
    }
    Ok(ResidualTable { rows, orders })
}

/// Slope of `log e` against `log h`.
pub fn fit_order(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 || pts.iter().any(|(h, e)| !(*h > 0.0) || !(*e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Degenerate equation `W_t = Div(|W|^α DW) + ε₀|W|^α W` as a model.
pub fn degenerate_model(alpha: f64, eps0: f64) -> Result<ModelSpec> {
    ModelSpec::new(
        Diffusion::ScalarWeight {
            gamma: Weight::Power { c0: 0.0, c1: 1.0, p: alpha },
            matrix: vec![1.0],
        },
        Reaction::PowerLaw { coef: eps0, power: alpha },
    )
}

/// Discrete stationary profile of `−Div(|U|^α DU) + c₁U = ε₀|U|^α U` on
/// `(0, 1)` with `U = 0` at both ends.
#[derive(Clone, Debug)]
pub struct StationaryProfile {
    pub alpha: f64,
    pub c1: f64,
    pub eps0: f64,
    pub field: FieldSet,
    /// Discrete L² residual of the stationary equation.
    pub residual: f64,
    pub iterations: usize,
}

fn stationary_operator(model: &ModelSpec, c1: f64, u: &FieldSet) -> Vec<f64> {
    let div = divergence_form(&Padded::new(u), model.layout(), |w, out| model.diffusion.eval_into(w, out));
    let mut g = [0.0];
    u.values()
        .iter()
        .zip(div.values())
        .map(|(&v, &d)| {
            model.reaction.eval_into(&[v], None, &mut g);
            -d + c1 * v - g[0]
        })
        .collect()
}

fn l2(grid: &Grid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt()
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut den = diag[0];
    if den == 0.0 {
        return None;
    }
    c[0] = sup[0] / den;
    d[0] = rhs[0] / den;
    for i in 1..n {
        den = diag[i] - sub[i] * c[i - 1];
        if den == 0.0 || !den.is_finite() {
            return None;
        }
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Some(x)
}

/// Newton iteration on the discrete two-point problem, with a tridiagonal
/// finite-difference Jacobian and backtracking.
///
/// A nonzero profile needs `ε₀ < 0` and `c₁ < 0`: testing the equation with
/// `U` shows that `c₁ > 0, ε₀ ≤ 0` only admits `U = 0`, and `ε₀ > 0` gives a
/// mountain-pass solution this iteration does not target. The start is the
/// plateau `(c₁/ε₀)^{1/α}` times `sin(πx)`.
pub fn stationary_profile(alpha: f64, c1: f64, eps0: f64, cells: usize) -> Result<StationaryProfile> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::Precondition(format!("α = {alpha} must be ≥ 1")));
    }
    if !(c1 < 0.0 && eps0 < 0.0) {
        return Err(Error::Precondition(format!(
            "a nonzero profile needs c₁ < 0 and ε₀ < 0, got c₁ = {c1}, ε₀ = {eps0}"
        )));
    }
    if cells < 4 {
        return Err(Error::Precondition("profile needs at least 4 cells".into()));
    }
    let grid = Grid::boxed(&[1.0], &[cells], Bc::DirichletZero)?;
    let model = degenerate_model(alpha, eps0)?;
    let plateau = (c1 / eps0).powf(1.0 / alpha);
    let mut u = FieldSet::scalar(&grid, |x| plateau * (std::f64::consts::PI * x[0]).sin());
    let mut f = stationary_operator(&model, c1, &u);
    let mut res = l2(&grid, &f);
    let n = cells;
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it;
        if res <= 1e-12 * plateau.max(1.0) {
            break;
        }
        let (mut sub, mut diag, mut sup) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for color in 0..3 {
            let mut up = u.clone();
            let mut hs = vec![0.0; n];
            for i in (color..n).step_by(3) {
                hs[i] = 1e-7 * u.values()[i].abs().max(1e-3 * plateau);
                up.values_mut()[i] += hs[i];
            }
            let fp = stationary_operator(&model, c1, &up);
            for i in (color..n).step_by(3) {
                for r in i.saturating_sub(1)..(i + 2).min(n) {
                    let d = (fp[r] - f[r]) / hs[i];
                    match r.cmp(&i) {
                        std::cmp::Ordering::Less => sup[r] = d,
                        std::cmp::Ordering::Equal => diag[r] = d,
                        std::cmp::Ordering::Greater => sub[r] = d,
                    }
                }
            }
        }
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let Some(step) = thomas(&sub, &diag, &sup, &neg) else {
            return Err(Error::NonConvergence("singular Jacobian in profile iteration".into()));
        };
        let mut lam = 1.0;
        let mut improved = false;
        while lam > 1e-4 {
            let mut trial = u.clone();
            trial.values_mut().iter_mut().zip(&step).for_each(|(v, s)| *v += lam * s);
            let ft = stationary_operator(&model, c1, &trial);
            let rt = l2(&grid, &ft);
            if rt < res {
                u = trial;
                f = ft;
                res = rt;
                improved = true;
                break;
            }
            lam *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(res <= 1e-6 * plateau.max(1.0)) {
        return Err(Error::NonConvergence(format!("profile residual stalled at {res:e}")));
    }
    Ok(StationaryProfile {
        alpha,
        c1,
        eps0,
        field: u,
        residual: res,
        iterations,
    })
}

/// `h(t) = h₀ (1 − α c₁ h₀^α t)^{−1/α}`, the solution of `h' = c₁ h^{α+1}`.
pub fn separable_amplitude(alpha: f64, c1: f64, h0: f64, t: f64) -> f64 {
    h0 * (1.0 - alpha * c1 * h0.powf(alpha) * t).powf(-1.0 / alpha)
}

/// Piecewise-linear interpolant of a 1-d Dirichlet profile, extended oddly
/// across both ends so ghost centers reproduce the Dirichlet ghost rule.
fn profile_lookup(values: Vec<f64>) -> impl Fn(f64) -> f64 + Send + Sync {
    let n = values.len();
    let h = 1.0 / n as f64;
    move |x: f64| {
        let (x, sign) = if x < 0.0 {
            (-x, -1.0)
        } else if x > 1.0 {
            (2.0 - x, -1.0)
        } else {
            (x, 1.0)
        };
        let s = x / h - 0.5;
        let at = |i: isize| -> f64 {
            if i < 0 {
                -values[0]
            } else if i as usize >= n {
                -values[n - 1]
            } else {
                values[i as usize]
            }
        };
        let i = s.floor();
        let fr = s - i;
        let i = i as isize;
        let v = if fr == 0.0 { at(i) } else { (1.0 - fr) * at(i) + fr * at(i + 1) };
        sign * v
    }
}

/// `W(x, t) = h(t) U₀(x₁)` with `h' = c₁ h^{α+1}`, `h(0) = h₀`.
///
/// The discrete evolution residual at time `t` equals `h(t)^{α+1}` times the
/// stationary residual of the profile, because the discrete operator is
/// homogeneous of degree `α + 1`.
pub fn separable_solution(profile: &StationaryProfile, h0: f64) -> Result<ExactSolution> {
    if !(h0 > 0.0) {
        return Err(Error::Precondition(format!("h₀ = {h0} must be positive")));
    }
    let (alpha, c1) = (profile.alpha, profile.c1);
    let end = if c1 > 0.0 {
        1.0 / (alpha * c1 * h0.powf(alpha))
    } else {
        f64::INFINITY
    };
    let look = Arc::new(profile_lookup(profile.field.values().to_vec()));
    let l2 = look.clone();
    Ok(ExactSolution {
        name: format!("separable(alpha={alpha},c1={c1})"),
        m: 1,
        state: Arc::new(move |x, t, out| out[0] = separable_amplitude(alpha, c1, h0, t) * look(x[0])),
        gradient: None,
        time_derivative: Some(Arc::new(move |x, t, out| {
            out[0] = c1 * separable_amplitude(alpha, c1, h0, t).powf(alpha + 1.0) * l2(x[0])
        })),
        window: (0.0, end),
    })
}

/// Linear-in-time candidate `(c₁ t/(α+1)) U₀(x₁)`; not a solution in
/// general, kept for comparison.
pub fn linear_candidate(profile: &StationaryProfile) -> ExactSolution {
    let (alpha, c1) = (profile.alpha, profile.c1);
    let look = Arc::new(profile_lookup(profile.field.values().to_vec()));
    let l2 = look.clone();
    ExactSolution {
        name: "linear_candidate".into(),
        m: 1,
        state: Arc::new(move |x, t, out| out[0] = c1 * t / (alpha + 1.0) * look(x[0])),
        gradient: None,
        time_derivative: Some(Arc::new(move |x, _, out| out[0] = c1 / (alpha + 1.0) * l2(x[0]))),
        window: (0.0, f64::INFINITY),
    }
}

/// `max |Du|` (Frobenius) of the bounded field on the cells of `grid`.
pub fn js_sup_gradient(grid: &Grid, t: f64, kappa: f64) -> Result<f64> {
    let n = grid.n_cells();
    (0..n)
        .into_par_iter()
        .map(|cell| {
            let s = js_state(&grid.center(cell), t, kappa)?;
            Ok(s.du.iter().flatten().map(|v| v * v).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max))
}

/// Looks up an exact solution by name: `js` (`kappa`), `affine` (`offset`,
/// `slope`), `separable` (`alpha`, `c1`, `eps0`, `h0`, `profile_cells`).
pub fn exact_by_name(name: &str, p: &crate::models::Params) -> Result<ExactSolution> {
    match name {
        "js" => js_solution(p.req_f64("kappa")?),
        "affine" => affine_solution(p.req_vec("offset")?, p.req_vec("slope")?),
        "separable" => {
            let cells = p.usize("profile_cells")?.unwrap_or(64);
            let prof = stationary_profile(p.req_f64("alpha")?, p.req_f64("c1")?, p.req_f64("eps0")?, cells)?;
            separable_solution(&prof, p.f64_or("h0", 1.0)?)
        }
        other => Err(Error::Config(format!("unknown exact solution `{other}`"))),
    }
}
