use crate::error::{Error, Result};
use crate::mesh::{integrate, Bc, FieldSet, Grid};
use crate::models::{Diffusion, ModelSpec};

/// Normalization applied to an eigenfunction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    L1,
    Ls(f64),
    Sup,
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub eigenvalue: f64,
    pub eigenfunction: FieldSet,
    pub normalization: Normalization,
    /// `‖−Div(γDφ) − λφ‖₂ / ‖φ‖₂` at return.
    pub residual: f64,
    pub iterations: usize,
}

/// Matrix-free `−Div(γ Dφ)` with face coefficients averaged from cells.
struct Operator<'a> {
    grid: &'a Grid,
    gamma: Vec<f64>,
}

impl Operator<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.grid;
        let dim = g.dim();
        for cell in 0..g.n_cells() {
            let ijk = g.unravel(cell);
            let mut acc = 0.0;
            for a in 0..dim {
                let n = g.cells()[a];
                let h2 = g.spacing()[a].powi(2);
                let s = g.strides()[a];
                let [lo, hi] = g.bcs()[a];
                for (side, bc) in [(0usize, lo), (1usize, hi)] {
                    let at_edge = if side == 0 { ijk[a] == 0 } else { ijk[a] + 1 == n };
                    if at_edge {
                        match bc {
                            Bc::NeumannZero => {}
                            Bc::DirichletZero | Bc::DirichletValue(_) => {
                                acc += 2.0 * self.gamma[cell] * x[cell] / h2;
                            }
                            Bc::Periodic | Bc::Antiperiodic => {
                                let sign = if bc == Bc::Periodic { 1.0 } else { -1.0 };
                                let nb = if side == 0 { cell + (n - 1) * s } else { cell - (n - 1) * s };
                                let gf = 0.5 * (self.gamma[cell] + self.gamma[nb]);
                                acc += gf * (x[cell] - sign * x[nb]) / h2;
                            }
                        }
                    } else {
                        let nb = if side == 0 { cell - s } else { cell + s };
                        let gf = 0.5 * (self.gamma[cell] + self.gamma[nb]);
                        acc += gf * (x[cell] - x[nb]) / h2;
                    }
                }
            }
            y[cell] = acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for the SPD operator, warm-started from `x`.
fn cg(op: &Operator, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
    let n = b.len();
    let mut ax = vec![0.0; n];
    op.apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(it);
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonConvergence("operator is not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(max_iter)
    } else {
        Err(Error::NonConvergence(format!(
            "inner solve stalled at relative residual {:e}",
            rr.sqrt() / bnorm
        )))
    }
}

fn normalize(grid: &Grid, v: &mut [f64], how: Normalization) {
    let scale = match how {
        Normalization::L1 => integrate(grid, &v.iter().map(|x| x.abs()).collect::<Vec<_>>()),
        Normalization::Ls(s) => {
            integrate(grid, &v.iter().map(|x| x.abs().powf(s)).collect::<Vec<_>>()).powf(1.0 / s)
        }
        Normalization::Sup => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    };
    v.iter_mut().for_each(|x| *x /= scale);
}

/// Principal eigenpair of `−Div(γ Dφ) = λφ` on `grid` by inverse power
/// iteration with conjugate-gradient inner solves (tolerance 1e−12 relative).
///
/// `gamma` holds one value per cell and is floored at 1e−12. The grid needs a
/// Dirichlet end somewhere and no antiperiodic axis, so the operator is
/// definite and its ground state is positive.
pub fn principal_eigenpair(grid: &Grid, gamma: &[f64], how: Normalization) -> Result<EigenPair> {
    if gamma.len() != grid.n_cells() {
        return Err(Error::Shape(format!(
            "γ has {} values for {} cells",
            gamma.len(),
            grid.n_cells()
        )));
    }
    if let Normalization::Ls(s) = how {
        if !(s >= 1.0) {
            return Err(Error::Precondition(format!("L^s normalization needs s ≥ 1, got {s}")));
        }
    }
    let bcs = grid.bcs();
    if !bcs.iter().flatten().any(|b| b.is_dirichlet()) {
        return Err(Error::Precondition(
            "eigenproblem needs a Dirichlet end; the operator is singular otherwise".into(),
        ));
    }
    if bcs.iter().flatten().any(|b| *b == Bc::Antiperiodic) {
        return Err(Error::Precondition(
            "antiperiodic axes admit no positive eigenfunction".into(),
        ));
    }
    let op = Operator {
        grid,
        gamma: gamma.iter().map(|g| g.max(1e-12)).collect(),
    };
    let n = grid.n_cells();
    let mut phi = vec![1.0; n];
    let nrm = dot(&phi, &phi).sqrt();
    phi.iter_mut().for_each(|v| *v /= nrm);
    let mut x = phi.clone();
    let mut lphi = vec![0.0; n];
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let cg_cap = 20 * n + 100;
    for it in 1..=500 {
        cg(&op, &phi, &mut x, 1e-12, cg_cap)?;
        let xn = dot(&x, &x).sqrt();
        for i in 0..n {
            phi[i] = x[i] / xn;
        }
        op.apply(&phi, &mut lphi);
        let new_lambda = dot(&phi, &lphi);
        let new_residual = phi
            .iter()
            .zip(&lphi)
            .map(|(p, l)| (l - new_lambda * p).powi(2))
            .sum::<f64>()
            .sqrt();
        let prev_residual = residual;
        residual = new_residual;
        // a settled λ only ends the loop once the residual stops improving
        let settled = (new_lambda - lambda).abs() <= 1e-14 * new_lambda.abs()
            && residual >= 0.9 * prev_residual;
        lambda = new_lambda;
        x.copy_from_slice(&phi);
        x.iter_mut().for_each(|v| *v /= lambda);
        if settled || residual <= 1e-10 * lambda.max(1.0) {
            if phi.iter().sum::<f64>() < 0.0 {
                phi.iter_mut().for_each(|v| *v = -*v);
            }
            normalize(grid, &mut phi, how);
            return Ok(EigenPair {
                eigenvalue: lambda,
                eigenfunction: FieldSet::from_values(grid, 1, phi)?,
                normalization: how,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence(format!(
        "inverse iteration stopped at λ = {lambda}, residual {residual:e}"
    )))
}

/// Applies `−Div(γ Dφ)` as used by the eigen-solver.
pub fn apply_operator(grid: &Grid, gamma: &[f64], phi: &[f64]) -> Vec<f64> {
    let op = Operator {
        grid,
        gamma: gamma.iter().map(|g| g.max(1e-12)).collect(),
    };
    let mut out = vec![0.0; phi.len()];
    op.apply(phi, &mut out);
    out
}

/// Principal eigenpair of `−Div(γ_i(W) Dφ)` for every row weight of a
/// factored-rows model.
pub fn row_eigenpairs(w: &FieldSet, model: &ModelSpec, how: Normalization) -> Result<Vec<EigenPair>> {
    let Diffusion::FactoredRows { gamma, .. } = &model.diffusion else {
        return Err(Error::WrongFamily(model.diffusion.name().into()));
    };
    let n = w.n_cells();
    let mut state = vec![0.0; w.m()];
    gamma
        .iter()
        .map(|gi| {
            let coeff: Vec<f64> = (0..n)
                .map(|cell| {
                    w.state_at(cell, &mut state);
                    gi.eval(&state)
                })
                .collect();
            principal_eigenpair(w.grid(), &coeff, how)
        })
        .collect()
}

/// Both sides of the row-tested balance for a factored-rows steady state:
/// `lhs = Σ_i z_i λ_i ∫ (Σ_j â_ij(w_j)) φ_i`, `rhs = Σ_i z_i ∫ g_i(W) φ_i`.
pub fn weighted_balance(
    w: &FieldSet,
    model: &ModelSpec,
    pairs: &[EigenPair],
    z: &[f64],
) -> Result<(f64, f64)> {
    let Diffusion::FactoredRows { entries, .. } = &model.diffusion else {
        return Err(Error::WrongFamily(model.diffusion.name().into()));
    };
    let m = w.m();
    if pairs.len() != m || z.len() != m || z.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Precondition(format!(
            "need {m} eigenpairs and {m} positive weights"
        )));
    }
    if model.reaction.needs_gradient() {
        return Err(Error::WrongFamily("gradient reaction".into()));
    }
    let n = w.n_cells();
    let mut state = vec![0.0; m];
    let mut g = vec![0.0; m];
    let mut lhs_density = vec![0.0; n];
    let mut rhs_density = vec![0.0; n];
    for cell in 0..n {
        w.state_at(cell, &mut state);
        model.reaction.eval_into(&state, None, &mut g);
        for i in 0..m {
            let phi = pairs[i].eigenfunction.get(0, cell);
            let hat: f64 = (0..m).map(|j| entries[i * m + j].hat(state[j])).sum();
            lhs_density[cell] += z[i] * pairs[i].eigenvalue * hat * phi;
            rhs_density[cell] += z[i] * g[i] * phi;
        }
    }
    Ok((integrate(w.grid(), &lhs_density), integrate(w.grid(), &rhs_density)))
}
