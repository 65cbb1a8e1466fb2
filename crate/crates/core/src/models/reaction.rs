use std::fmt;
use std::sync::Arc;

use super::maps::{norm, pow_or_one};
use crate::error::{Error, Result};

/// Pointwise map used by [`Reaction::Custom`].
pub type PointwiseFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Reaction families `g(W)`.
#[derive(Clone)]
pub enum Reaction {
    None,
    /// `G(W) W` with `G_ij = g0_ij + Σ_k g1_ijk w_k`.
    LinearMatrix { m: usize, g0: Vec<f64>, g1: Vec<f64> },
    /// `coef · |W|^power · W`.
    PowerLaw { coef: f64, power: f64 },
    /// `b(u) = β |u|^p u` with scalar potential `B(u) = b_coef |u|^{b_exp}`.
    PotentialPair { beta: f64, p: f64, b_coef: f64, b_exp: f64 },
    /// `(W/|W|) |DW|^q − coef |W|^power W`; the direction factor is 0 at W = 0.
    Gradient { q: f64, coef: f64, power: f64 },
    Custom(PointwiseFn),
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reaction::None => write!(f, "None"),
            Reaction::LinearMatrix { m, g0, g1 } => f
                .debug_struct("LinearMatrix")
                .field("m", m)
                .field("g0", g0)
                .field("g1", g1)
                .finish(),
            Reaction::PowerLaw { coef, power } => write!(f, "PowerLaw({coef}, {power})"),
            Reaction::PotentialPair { beta, p, b_coef, b_exp } => {
                write!(f, "PotentialPair({beta}, {p}, {b_coef}, {b_exp})")
            }
            Reaction::Gradient { q, coef, power } => write!(f, "Gradient({q}, {coef}, {power})"),
            Reaction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Reaction {
    /// The planar `G = [[b₁ + c₁u, k₁v + l₁], [k₂u + l₂, b₂ + c₂v]]`.
    pub fn planar(b: [f64; 2], c: [f64; 2], k: [f64; 2], l: [f64; 2]) -> Reaction {
        let g0 = vec![b[0], l[0], l[1], b[1]];
        let mut g1 = vec![0.0; 8];
        // index (i, j, k) = (i * 2 + j) * 2 + k
        g1[0] = c[0]; // G11 += c1 u
        g1[(1) * 2 + 1] = k[0]; // G12 += k1 v
        g1[(2) * 2] = k[1]; // G21 += k2 u
        g1[(3) * 2 + 1] = c[1]; // G22 += c2 v
        Reaction::LinearMatrix { m: 2, g0, g1 }
    }

    /// Pair `b = β|u|^p u` for `a = |u|^{m₀−1} u`, with `B_u = 2 a_uᵀ b`.
    pub fn power_pair(beta: f64, p: f64, m0: f64) -> Reaction {
        let e = m0 + p + 1.0;
        Reaction::PotentialPair {
            beta,
            p,
            b_coef: 2.0 * beta * m0 / e,
            b_exp: e,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Reaction::None => "none",
            Reaction::LinearMatrix { .. } => "linear_matrix",
            Reaction::PowerLaw { .. } => "power_law",
            Reaction::PotentialPair { .. } => "potential_pair",
            Reaction::Gradient { .. } => "gradient",
            Reaction::Custom(_) => "custom",
        }
    }

    pub fn needs_gradient(&self) -> bool {
        matches!(self, Reaction::Gradient { .. })
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if let Reaction::LinearMatrix { m: mm, g0, g1 } = self {
            if *mm != m || g0.len() != m * m || g1.len() != m * m * m {
                return Err(Error::Config(format!(
                    "linear_matrix reaction must be {m}×{m} with {} linear coefficients",
                    m * m * m
                )));
            }
        }
        Ok(())
    }

    /// Evaluates `g(W)`. `dw` holds `∂_α w_c` at `c * dim + α` and is read only
    /// by the gradient family.
    pub fn eval_into(&self, w: &[f64], dw: Option<&[f64]>, out: &mut [f64]) {
        let m = w.len();
        match self {
            Reaction::None => out[..m].iter_mut().for_each(|v| *v = 0.0),
            Reaction::LinearMatrix { g0, g1, .. } => {
                for i in 0..m {
                    let mut s = 0.0;
                    for j in 0..m {
                        let mut gij = g0[i * m + j];
                        for k in 0..m {
                            gij += g1[(i * m + j) * m + k] * w[k];
                        }
                        s += gij * w[j];
                    }
                    out[i] = s;
                }
            }
            Reaction::PowerLaw { coef, power } => {
                let f = coef * pow_or_one(norm(w), *power);
                for i in 0..m {
                    out[i] = f * w[i];
                }
            }
            Reaction::PotentialPair { beta, p, .. } => {
                let f = beta * pow_or_one(norm(w), *p);
                for i in 0..m {
                    out[i] = f * w[i];
                }
            }
            Reaction::Gradient { q, coef, power } => {
                let r = norm(w);
                let g2: f64 = dw.map(|d| d.iter().map(|v| v * v).sum()).unwrap_or(0.0);
                let drive = pow_or_one(g2.sqrt(), *q);
                let sink = coef * pow_or_one(r, *power);
                for i in 0..m {
                    let dir = if r > 0.0 { w[i] / r } else { 0.0 };
                    out[i] = dir * drive - sink * w[i];
                }
            }
            Reaction::Custom(f) => f(w, out),
        }
    }

    /// Scalar potential `B(u)` of a potential pair.
    pub fn big_b(&self, w: &[f64]) -> Option<f64> {
        match self {
            Reaction::PotentialPair { b_coef, b_exp, .. } => {
                Some(b_coef * pow_or_one(norm(w), *b_exp))
            }
            Reaction::None => Some(0.0),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_matrix_expands() {
        let r = Reaction::planar([1.0, 0.0], [0.0; 2], [0.0; 2], [1.0, 0.0]);
        let mut out = [0.0; 2];
        r.eval_into(&[1.0, 2.0], None, &mut out);
        assert_eq!(out[0], 3.0);
        let zero = Reaction::planar([0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]);
        zero.eval_into(&[1.0, 2.0], None, &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn planar_quadratic_terms() {
        let r = Reaction::planar([0.0; 2], [2.0, 3.0], [5.0, 7.0], [0.0; 2]);
        let (u, v) = (1.5, -0.5);
        let mut out = [0.0; 2];
        r.eval_into(&[u, v], None, &mut out);
        assert!((out[0] - (2.0 * u * u + 5.0 * v * v)).abs() < 1e-14);
        assert!((out[1] - (7.0 * u * u + 3.0 * v * v)).abs() < 1e-14);
    }

    #[test]
    fn power_sink_at_unit_vector() {
        let r = Reaction::PowerLaw { coef: -1.0, power: 1.0 };
        let mut out = [0.0; 2];
        r.eval_into(&[1.0, 0.0], None, &mut out);
        assert_eq!(out, [-1.0, 0.0]);
    }

    #[test]
    fn gradient_reaction_at_origin() {
        let r = Reaction::Gradient { q: 1.5, coef: 2.0, power: 0.0 };
        let mut out = [9.0; 2];
        r.eval_into(&[0.0, 0.0], Some(&[1.0, 2.0, 3.0, 4.0]), &mut out);
        assert_eq!(out, [0.0, 0.0]);
    }

    #[test]
    fn power_pair_potential() {
        let r = Reaction::power_pair(1.0, 2.0, 2.0);
        let b = r.big_b(&[2.0]).unwrap();
        assert!((b - 0.8 * 32.0).abs() < 1e-12);
    }
}
