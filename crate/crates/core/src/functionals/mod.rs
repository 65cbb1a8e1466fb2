//! Integral quantities along a trajectory: norms, weighted energies, Levine
//! potentials, BMO seminorms, the slab criterion and principal eigenpairs.

mod bmo;
mod eigen;
mod quadrature;

pub use bmo::{bmo_seminorm, slab_criterion};
pub use eigen::{
    apply_operator, principal_eigenpair, row_eigenpairs, weighted_balance, EigenPair,
    Normalization,
};
pub use quadrature::{gl32, GaussLegendre};

use crate::error::{Error, Result};
use crate::mesh::{gradient, integrate, FieldSet, TensorLayout};
use crate::models::{ModelSpec, PotentialMap};

/// `(∫|W|^p)^{1/p}` with the Euclidean norm over components; `p = ∞` is the max.
pub fn lp_norm(field: &FieldSet, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Precondition(format!("L^p norm needs p ≥ 1, got {p}")));
    }
    let mag = field.magnitude();
    if p.is_infinite() {
        return Ok(mag.iter().cloned().fold(0.0, f64::max));
    }
    let dens: Vec<f64> = mag.iter().map(|v| v.powf(p)).collect();
    Ok(integrate(field.grid(), &dens).powf(1.0 / p))
}

/// `∫ λ(W) |DW|²` with `λ(W) = lambda_scale · (1 + |W|^k)`.
pub fn weighted_dirichlet(w: &FieldSet, model: &ModelSpec) -> Result<f64> {
    let dw = gradient(w.grid(), w)?;
    let g2 = dw.squared_norm();
    let mut state = vec![0.0; w.m()];
    let dens: Vec<f64> = (0..w.n_cells())
        .map(|cell| {
            w.state_at(cell, &mut state);
            model.lambda(&state) * g2[cell]
        })
        .collect();
    Ok(integrate(w.grid(), &dens))
}

/// Per-cell flux `A(W) DW` ordered `(component, direction)`.
pub fn flux_density(w: &FieldSet, model: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    let g = w.grid();
    let dim = g.dim();
    let m = w.m();
    let dw = gradient(g, w)?;
    let mut a = vec![0.0; model.tensor_len(dim)];
    let mut state = vec![0.0; m];
    let mut out = Vec::with_capacity(w.n_cells());
    for cell in 0..w.n_cells() {
        w.state_at(cell, &mut state);
        model.diffusion.eval_into(&state, &mut a);
        let mut f = vec![0.0; m * dim];
        for i in 0..m {
            for al in 0..dim {
                f[i * dim + al] = match model.layout() {
                    TensorLayout::ComponentMatrix => {
                        (0..m).map(|j| a[i * m + j] * dw.get(j, al, cell)).sum()
                    }
                    TensorLayout::FullTensor => {
                        let md = m * dim;
                        let mut s = 0.0;
                        for j in 0..m {
                            for b in 0..dim {
                                s += a[(i * dim + al) * md + j * dim + b] * dw.get(j, b, cell);
                            }
                        }
                        s
                    }
                };
            }
        }
        out.push(f);
    }
    Ok(out)
}

/// `∫ |A(W) DW|²`.
pub fn flux_energy(w: &FieldSet, model: &ModelSpec) -> Result<f64> {
    let dens: Vec<f64> = flux_density(w, model)?
        .iter()
        .map(|f| f.iter().map(|v| v * v).sum())
        .collect();
    Ok(integrate(w.grid(), &dens))
}

/// `∫₀¹ ⟨a(ρu), u⟩ dρ` by 32-point Gauss–Legendre.
pub fn phi_density(map: &PotentialMap, u: &[f64]) -> f64 {
    let mut a = vec![0.0; u.len()];
    let mut ru = vec![0.0; u.len()];
    gl32().integrate(|rho| {
        for (r, v) in ru.iter_mut().zip(u) {
            *r = rho * v;
        }
        map.eval(&ru, &mut a);
        a.iter().zip(u).map(|(x, y)| x * y).sum()
    })
}

/// `φ = ∫_Ω ∫₀¹ ⟨a(ρW), W⟩ dρ`.
pub fn levine_phi(w: &FieldSet, map: &PotentialMap) -> Result<f64> {
    if map.m() != w.m() {
        return Err(Error::Shape(format!(
            "potential map has {} components, field has {}",
            map.m(),
            w.m()
        )));
    }
    let mut state = vec![0.0; w.m()];
    let dens: Vec<f64> = (0..w.n_cells())
        .map(|cell| {
            w.state_at(cell, &mut state);
            phi_density(map, &state)
        })
        .collect();
    Ok(integrate(w.grid(), &dens))
}

/// `ψ = −γ ∫ |D a(W)|² + ∫ B(W)`; `γ = 1` gives the plain Levine ψ.
pub fn levine_psi_weighted(
    w: &FieldSet,
    map: &PotentialMap,
    big_b: &dyn Fn(&[f64]) -> f64,
    gamma: f64,
) -> Result<f64> {
    if map.m() != w.m() {
        return Err(Error::Shape("potential map and field disagree on m".into()));
    }
    let m = w.m();
    let n = w.n_cells();
    let mut aw = FieldSet::zeros(w.grid(), m);
    let mut state = vec![0.0; m];
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; n];
    for cell in 0..n {
        w.state_at(cell, &mut state);
        map.eval(&state, &mut a);
        for c in 0..m {
            aw.values_mut()[c * n + cell] = a[c];
        }
        b[cell] = big_b(&state);
    }
    let da = gradient(w.grid(), &aw)?;
    let grad = integrate(w.grid(), &da.squared_norm());
    Ok(-gamma * grad + integrate(w.grid(), &b))
}

pub fn levine_psi(w: &FieldSet, map: &PotentialMap, big_b: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
    levine_psi_weighted(w, map, big_b, 1.0)
}

/// ψ for a model whose reaction declares a scalar potential.
pub fn levine_psi_model(w: &FieldSet, model: &ModelSpec) -> Result<f64> {
    let map = model
        .potential()
        .ok_or_else(|| Error::WrongFamily(model.diffusion.name().into()))?;
    if model.reaction.big_b(&vec![0.0; model.m()]).is_none() {
        return Err(Error::MissingPotential);
    }
    let reaction = model.reaction.clone();
    levine_psi(w, &map, &move |u| reaction.big_b(u).unwrap_or(0.0))
}

/// Registered functionals recordable along a run.
#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    L1,
    L2,
    LInf,
    /// `∫ |W|²`.
    L2Squared,
    /// `∫ w_c` for one component.
    Mass(usize),
    WeightedDirichlet,
    FluxEnergy,
    LevinePhi,
    LevinePsi,
    Bmo(f64),
    Slab(f64),
}

impl Functional {
    /// Parses `l1`, `l2`, `linf`, `l2sq`, `mass:c`, `weighted_dirichlet`,
    /// `flux_energy`, `levine_phi`, `levine_psi`, `bmo:size`, `slab:R`.
    pub fn parse(text: &str) -> Result<Functional> {
        let t = text.trim();
        let (head, arg) = match t.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (t, None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.and_then(|s| s.parse::<f64>().ok())
                .filter(|v| *v > 0.0)
                .ok_or_else(|| Error::Config(format!("`{t}` needs a positive argument")))
        };
        Ok(match head {
            "l1" => Functional::L1,
            "l2" => Functional::L2,
            "linf" => Functional::LInf,
            "l2sq" => Functional::L2Squared,
            "mass" => Functional::Mass(
                arg.unwrap_or("0")
                    .parse()
                    .map_err(|_| Error::Config(format!("bad component in `{t}`")))?,
            ),
            "weighted_dirichlet" => Functional::WeightedDirichlet,
            "flux_energy" => Functional::FluxEnergy,
            "levine_phi" => Functional::LevinePhi,
            "levine_psi" => Functional::LevinePsi,
            "bmo" => Functional::Bmo(num(arg)?),
            "slab" => Functional::Slab(num(arg)?),
            _ => return Err(Error::Config(format!("unknown functional `{t}`"))),
        })
    }

    /// Stable CSV column name.
    pub fn column(&self) -> String {
        match self {
            Functional::L1 => "l1".into(),
            Functional::L2 => "l2".into(),
            Functional::LInf => "linf".into(),
            Functional::L2Squared => "l2sq".into(),
            Functional::Mass(c) => format!("mass_{c}"),
            Functional::WeightedDirichlet => "weighted_dirichlet".into(),
            Functional::FluxEnergy => "flux_energy".into(),
            Functional::LevinePhi => "levine_phi".into(),
            Functional::LevinePsi => "levine_psi".into(),
            Functional::Bmo(s) => format!("bmo_{s}"),
            Functional::Slab(r) => format!("slab_{r}"),
        }
    }

    pub fn eval(&self, w: &FieldSet, model: &ModelSpec) -> Result<f64> {
        match self {
            Functional::L1 => lp_norm(w, 1.0),
            Functional::L2 => lp_norm(w, 2.0),
            Functional::LInf => lp_norm(w, f64::INFINITY),
            Functional::L2Squared => Ok(lp_norm(w, 2.0)?.powi(2)),
            Functional::Mass(c) => {
                if *c >= w.m() {
                    return Err(Error::Config(format!("mass component {c} out of range")));
                }
                Ok(integrate(w.grid(), w.component(*c)))
            }
            Functional::WeightedDirichlet => weighted_dirichlet(w, model),
            Functional::FluxEnergy => flux_energy(w, model),
            Functional::LevinePhi => {
                let map = model
                    .potential()
                    .ok_or_else(|| Error::WrongFamily(model.diffusion.name().into()))?;
                levine_phi(w, &map)
            }
            Functional::LevinePsi => levine_psi_model(w, model),
            Functional::Bmo(s) => bmo_seminorm(w, &[*s]),
            Functional::Slab(r) => slab_criterion(w, *r),
        }
    }
}

/// Time-stamped rows of named values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub columns: Vec<String>,
    pub rows: Vec<(f64, Vec<f64>)>,
}

impl DiagnosticsSeries {
    pub fn new(columns: Vec<String>) -> DiagnosticsSeries {
        DiagnosticsSeries {
            columns,
            rows: Vec::new(),
        }
    }

    /// Appends a row; times must strictly increase.
    pub fn push(&mut self, time: f64, values: Vec<f64>) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::Shape(format!(
                "row has {} values for {} columns",
                values.len(),
                self.columns.len()
            )));
        }
        if let Some((last, _)) = self.rows.last() {
            if !(time > *last) {
                return Err(Error::Precondition(format!(
                    "diagnostics time {time} does not follow {last}"
                )));
            }
        }
        self.rows.push((time, values));
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|(_, v)| v[idx]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|(t, _)| *t).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (t, vals) in &self.rows {
            s.push_str(&t.to_string());
            for v in vals {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }
}
