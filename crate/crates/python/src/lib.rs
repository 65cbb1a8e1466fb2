use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use crossdiff_core::certificates;
use crossdiff_core::exact;
use crossdiff_core::functionals::{principal_eigenpair, Normalization};
use crossdiff_core::mesh::{Bc, Grid};
use crossdiff_core::models::{self, ModelSpec, Params, PotentialMap};
use crossdiff_core::scenario;
use crossdiff_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A diffusion-reaction model built from `[model]`-style key/value pairs.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(params: BTreeMap<String, String>) -> PyResult<Self> {
        let pairs: Vec<(&str, &str)> = params.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let inner = models::build_model(&Params::from_pairs(&pairs)).map_err(py_err)?;
        Ok(PyModel { inner })
    }

    /// Number of unknowns.
    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.diffusion.name()
    }

    /// `λ(W) = lambda_scale·(1 + |W|^k)`.
    fn ellipticity_weight(&self, w: Vec<f64>) -> PyResult<f64> {
        self.check_state(&w)?;
        Ok(self.inner.lambda(&w))
    }

    /// Flat tensor entries at the state `w` for a domain of dimension `dim`.
    fn diffusion_tensor(&self, w: Vec<f64>, dim: usize) -> PyResult<Vec<f64>> {
        self.check_state(&w)?;
        if !(1..=3).contains(&dim) {
            return Err(PyValueError::new_err(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        Ok(models::eval_diffusion(&self.inner, &w, dim).values)
    }

    /// Reaction `g(W)`; gradient-dependent reactions are evaluated at `DW = 0`.
    fn reaction(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_state(&w)?;
        models::eval_reaction(&self.inner, &w, None).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Model(family={:?}, m={})", self.inner.diffusion.name(), self.inner.m())
    }
}

impl PyModel {
    fn check_state(&self, w: &[f64]) -> PyResult<()> {
        if w.len() != self.inner.m() {
            return Err(PyValueError::new_err(format!(
                "state has {} components, model expects {}",
                w.len(),
                self.inner.m()
            )));
        }
        Ok(())
    }
}

/// Outcome of a scenario run.
#[pyclass(name = "ScenarioResult", frozen, get_all)]
struct PyScenarioResult {
    exit_code: i32,
    summary: String,
    artifacts: Vec<String>,
}

#[pymethods]
impl PyScenarioResult {
    fn __repr__(&self) -> String {
        format!("ScenarioResult(exit_code={}, artifacts={})", self.exit_code, self.artifacts.len())
    }
}

/// Runs scenario text, writing artifacts under `output`.
#[pyfunction]
#[pyo3(signature = (text, output, seed=None))]
fn run_scenario(py: Python<'_>, text: &str, output: PathBuf, seed: Option<u64>) -> PyResult<PyScenarioResult> {
    let mut cfg = scenario::parse_scenario(text).map_err(py_err)?;
    cfg.output = output;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let outcome = py.detach(|| scenario::run_scenario(&cfg)).map_err(py_err)?;
    let summary = match &outcome.sweep {
        Some(t) => t.to_text(),
        None => outcome.summary.to_text(),
    };
    Ok(PyScenarioResult {
        exit_code: outcome.exit.code(),
        summary,
        artifacts: outcome.artifacts.iter().map(|p| p.display().to_string()).collect(),
    })
}

/// `(u, Du, u_t)` of the self-similar vector solution at `x`, `t < 1`.
#[pyfunction]
fn js_state(x: [f64; 3], t: f64, kappa: f64) -> PyResult<([f64; 3], [[f64; 3]; 3], [f64; 3])> {
    let s = exact::js_state(&x, t, kappa).map_err(py_err)?;
    Ok((s.u, s.du, s.ut))
}

#[pyfunction]
fn blowup_horizon(phi0: f64, psi0: f64, c: f64) -> PyResult<f64> {
    certificates::blowup_horizon(phi0, psi0, c).map_err(py_err)
}

/// Sampled κ̂ for the diagonal power map `u_i ↦ |u_i|^{m_i−1}u_i`.
#[pyfunction]
#[pyo3(signature = (exps, count=20_000, seed=0, nonnegative=false))]
fn kappa_diagonal(exps: Vec<f64>, count: usize, seed: u64, nonnegative: bool) -> PyResult<f64> {
    if exps.is_empty() {
        return Err(PyValueError::new_err("exps is empty"));
    }
    let m = exps.len();
    let map = PotentialMap::DiagonalPowerLaw { exps };
    let sampler = certificates::Sampler {
        count,
        seed,
        nonnegative,
        ..Default::default()
    };
    let est = certificates::kappa_infimum(&map, &sampler.draw(m), 0.0).map_err(py_err)?;
    Ok(est.kappa)
}

/// Principal eigenvalue and L¹-normalized eigenfunction of `−Div(γ Dφ)`
/// with zero Dirichlet data on a box.
#[pyfunction]
fn principal_eigenvalue(extent: Vec<f64>, cells: Vec<usize>, gamma: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
    let grid = Grid::boxed(&extent, &cells, Bc::DirichletZero).map_err(py_err)?;
    if gamma.len() != grid.n_cells() {
        return Err(PyValueError::new_err(format!(
            "gamma has {} values, grid has {} cells",
            gamma.len(),
            grid.n_cells()
        )));
    }
    let pair = principal_eigenpair(&grid, &gamma, Normalization::L1).map_err(py_err)?;
    Ok((pair.eigenvalue, pair.eigenfunction.component(0).to_vec()))
}

#[pymodule]
pub fn crossdiff(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyScenarioResult>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(js_state, m)?)?;
    m.add_function(wrap_pyfunction!(blowup_horizon, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_diagonal, m)?)?;
    m.add_function(wrap_pyfunction!(principal_eigenvalue, m)?)?;
    Ok(())
}
