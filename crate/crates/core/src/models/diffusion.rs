use super::maps::{pow_or_one, Poly, PotentialMap, Weight};
use crate::error::{Error, Result};
use crate::mesh::TensorLayout;

/// Diffusion-tensor families.
#[derive(Clone, Debug, PartialEq)]
pub enum Diffusion {
    /// Constant row-major `m × m` matrix.
    Constant { m: usize, matrix: Vec<f64> },
    /// Jacobian of `u_i ↦ (d_i + Σ_j α_ij u_j) u_i`.
    Skt { d: Vec<f64>, alpha: Vec<f64> },
    /// `γ(W) · [a_ij]`.
    ScalarWeight { gamma: Weight, matrix: Vec<f64> },
    /// Row `i` is `γ_i(W) · [a_i1(w_1), …, a_im(w_m)]`.
    FactoredRows { entries: Vec<Poly>, gamma: Vec<Weight> },
    /// Jacobian of `a_i(u) = |u|^{m_i − 1} u_i`.
    DiagonalPowerLaw { exps: Vec<f64> },
    /// Jacobian of `a_i(u) = |u_i|^{m_i − 1} u_i`.
    DiagonalSeparate { exps: Vec<f64> },
    /// Jacobian of `a_i(u) = (K + |u|²)^{(m₀ − 1)/2} u_i`.
    KShifted { m: usize, k_shift: f64, m0: f64 },
    /// Full tensor `θ δ_ij δ_αβ + A_iα(u) A_jβ(u)` on ℝ³ with three components.
    JsTensor { kappa: f64, theta: f64 },
    /// State `(u_1, …, u_n, v)`: `u_i` rows carry `a_i'(u_i)` on the diagonal and
    /// `c_i(v)` in the last column; the `v` row is `d(v)` alone.
    Triangular { exps: Vec<f64>, cross: Vec<Poly>, dv: Poly },
}

impl Diffusion {
    pub fn m(&self) -> usize {
        match self {
            Diffusion::Constant { m, .. } | Diffusion::KShifted { m, .. } => *m,
            Diffusion::Skt { d, .. } => d.len(),
            Diffusion::ScalarWeight { matrix, .. } => (matrix.len() as f64).sqrt().round() as usize,
            Diffusion::FactoredRows { gamma, .. } => gamma.len(),
            Diffusion::DiagonalPowerLaw { exps } | Diffusion::DiagonalSeparate { exps } => exps.len(),
            Diffusion::JsTensor { .. } => 3,
            Diffusion::Triangular { exps, .. } => exps.len() + 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Diffusion::Constant { .. } => "constant",
            Diffusion::Skt { .. } => "skt",
            Diffusion::ScalarWeight { .. } => "scalar_weight",
            Diffusion::FactoredRows { .. } => "factored_rows",
            Diffusion::DiagonalPowerLaw { .. } => "diagonal_power_law",
            Diffusion::DiagonalSeparate { .. } => "diagonal_separate",
            Diffusion::KShifted { .. } => "k_shifted",
            Diffusion::JsTensor { .. } => "js_tensor",
            Diffusion::Triangular { .. } => "triangular",
        }
    }

    pub fn layout(&self) -> TensorLayout {
        match self {
            Diffusion::JsTensor { .. } => TensorLayout::FullTensor,
            _ => TensorLayout::ComponentMatrix,
        }
    }

    /// Potential map `a` with `A = a_u`, for the families that have one.
    pub fn potential(&self) -> Option<PotentialMap> {
        match self {
            Diffusion::Constant { m, matrix } => Some(PotentialMap::Linear {
                m: *m,
                matrix: matrix.clone(),
            }),
            Diffusion::Skt { d, alpha } => Some(PotentialMap::Skt {
                d: d.clone(),
                alpha: alpha.clone(),
            }),
            Diffusion::DiagonalPowerLaw { exps } => {
                Some(PotentialMap::DiagonalPowerLaw { exps: exps.clone() })
            }
            Diffusion::DiagonalSeparate { exps } => {
                Some(PotentialMap::DiagonalSeparate { exps: exps.clone() })
            }
            Diffusion::KShifted { m, k_shift, m0 } => Some(PotentialMap::KShifted {
                m: *m,
                k_shift: *k_shift,
                m0: *m0,
            }),
            _ => None,
        }
    }

    /// Growth exponent `k` implied by the family.
    pub fn derived_k(&self) -> f64 {
        match self {
            Diffusion::Constant { .. } | Diffusion::JsTensor { .. } => 0.0,
            Diffusion::Skt { alpha, .. } => {
                if alpha.iter().any(|a| *a != 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
            Diffusion::ScalarWeight { gamma, .. } => gamma.growth(),
            Diffusion::FactoredRows { entries, gamma } => {
                let g = gamma.iter().map(Weight::growth).fold(0.0, f64::max);
                let d = entries.iter().map(|p| p.degree() as f64).fold(0.0, f64::max);
                g + d
            }
            Diffusion::DiagonalPowerLaw { exps } | Diffusion::DiagonalSeparate { exps } => {
                exps.iter().map(|e| e - 1.0).fold(0.0, f64::max)
            }
            Diffusion::KShifted { m0, .. } => m0 - 1.0,
            Diffusion::Triangular { exps, cross, dv } => {
                let a = exps.iter().map(|e| e - 1.0).fold(0.0, f64::max);
                let c = cross.iter().map(|p| p.degree() as f64).fold(0.0, f64::max);
                a.max(c).max(dv.degree() as f64)
            }
        }
    }

    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        let m = self.m();
        if m == 0 {
            return Err(Error::Config("diffusion needs at least one component".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Diffusion::Constant { matrix, .. } | Diffusion::ScalarWeight { matrix, .. } => {
                if matrix.len() != m * m || !finite(matrix) {
                    return Err(Error::Config(format!(
                        "{} needs {} finite matrix entries",
                        self.name(),
                        m * m
                    )));
                }
            }
            Diffusion::FactoredRows { entries, .. } => {
                if entries.len() != m * m {
                    return Err(Error::Config(format!(
                        "factored_rows needs {} entry polynomials",
                        m * m
                    )));
                }
            }
            Diffusion::JsTensor { kappa, theta } => {
                if let Some(d) = dim {
                    if d != 3 {
                        return Err(Error::Config("js_tensor requires a 3-d grid".into()));
                    }
                }
                js_admissible(*kappa, *theta)?;
            }
            Diffusion::Triangular { exps, cross, .. } => {
                if cross.len() != exps.len() || exps.iter().any(|e| *e < 1.0) {
                    return Err(Error::Config(
                        "triangular needs one cross polynomial per u-component and exponents ≥ 1"
                            .into(),
                    ));
                }
            }
            _ => {}
        }
        if let Some(p) = self.potential() {
            p.validate()?;
        }
        Ok(())
    }

    /// Writes the pointwise tensor in [`Self::layout`] order.
    pub fn eval_into(&self, w: &[f64], out: &mut [f64]) {
        let m = self.m();
        match self {
            Diffusion::Constant { matrix, .. } => out[..m * m].copy_from_slice(matrix),
            Diffusion::ScalarWeight { gamma, matrix } => {
                let g = gamma.eval(w);
                for (o, a) in out.iter_mut().zip(matrix) {
                    *o = g * a;
                }
            }
            Diffusion::FactoredRows { entries, gamma } => {
                for i in 0..m {
                    let g = gamma[i].eval(w);
                    for j in 0..m {
                        out[i * m + j] = g * entries[i * m + j].eval(w[j]);
                    }
                }
            }
            Diffusion::JsTensor { kappa, theta } => js_full_tensor(w, *kappa, *theta, out),
            Diffusion::Triangular { exps, cross, dv } => {
                out[..m * m].iter_mut().for_each(|v| *v = 0.0);
                let v = w[m - 1];
                for (i, e) in exps.iter().enumerate() {
                    out[i * m + i] = e * pow_or_one(w[i].abs(), e - 1.0);
                    out[i * m + m - 1] = cross[i].eval(v);
                }
                out[m * m - 1] = dv.eval(v);
            }
            _ => self
                .potential()
                .expect("gradient family has a potential")
                .jacobian(w, out),
        }
    }
}

const JS_N: f64 = 3.0;

/// Checks the open intervals for `κ` and `θ` with N = 3.
pub fn js_admissible(kappa: f64, theta: f64) -> Result<()> {
    let kmax = 2.0 * (JS_N - 1.0) / (JS_N - 2.0);
    if !(kappa > 0.0 && kappa < kmax) {
        return Err(Error::Config(format!(
            "js_tensor: kappa = {kappa} outside (0, {kmax})"
        )));
    }
    let tmax = JS_N - 2.0 - kappa / (2.0 * (JS_N - 1.0));
    if !(theta > 0.0 && theta < tmax) {
        return Err(Error::Config(format!(
            "js_tensor: theta = {theta} outside (0, {tmax})"
        )));
    }
    Ok(())
}

/// Square-root argument of the `A_iα` denominator.
pub fn js_radicand(r2: f64, kappa: f64, theta: f64) -> f64 {
    let n = JS_N;
    n * (n - 1.0 - theta) - (2.0 * (n - 1.0 - theta) + 0.5 * kappa) * r2 - theta * r2 * r2
}

/// Row-major 3×3 factor `A_iα(u)`.
///
/// The `u_i u_α` coefficient is `1 + θ + κ/(2(N−1))`; with it the vector
/// field `x/√(κ(1−t)+|x|²)` solves the evolution equation exactly.
pub fn js_factor(u: &[f64], kappa: f64, theta: f64) -> Result<[f64; 9]> {
    let n = JS_N;
    let r2: f64 = u[..3].iter().map(|v| v * v).sum();
    let rad = js_radicand(r2, kappa, theta);
    if !(rad > 0.0) {
        return Err(Error::Evaluation(format!(
            "js_tensor: square-root argument {rad} ≤ 0 at |u|² = {r2}"
        )));
    }
    let den = rad.sqrt();
    let q = kappa / (2.0 * (n - 1.0));
    let diag = n - 1.0 - theta - r2 * (1.0 + q);
    let cross = 1.0 + theta + q;
    let mut a = [0.0; 9];
    for i in 0..3 {
        for al in 0..3 {
            let d = if i == al { diag } else { 0.0 };
            a[i * 3 + al] = (d + cross * u[i] * u[al]) / den;
        }
    }
    Ok(a)
}

fn js_full_tensor(u: &[f64], kappa: f64, theta: f64, out: &mut [f64]) {
    match js_factor(u, kappa, theta) {
        Ok(a) => {
            for r in 0..9 {
                for c in 0..9 {
                    let id = if r == c { theta } else { 0.0 };
                    out[r * 9 + c] = id + a[r] * a[c];
                }
            }
        }
        Err(_) => out[..81].iter_mut().for_each(|v| *v = f64::NAN),
    }
}
