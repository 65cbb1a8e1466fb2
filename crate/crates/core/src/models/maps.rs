//! Scalar coefficient functions and vector potential maps `a: ℝ^m → ℝ^m`.

use crate::error::{Error, Result};

/// Polynomial `Σ c_k t^k` with its antiderivative vanishing at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Poly {
        Poly(vec![c])
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c)
    }

    /// `∫₀ᵗ p(s) ds`.
    pub fn hat(&self, t: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * t + c / (k + 1) as f64)
            * t
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }
}

/// Scalar weight γ(W) multiplying a diffusion matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    Constant(f64),
    /// `c0 + Σ c_i |w_i|`.
    Linear { c0: f64, c: Vec<f64> },
    /// `c0 + c1 |W|^p`.
    Power { c0: f64, c1: f64, p: f64 },
}

impl Weight {
    pub fn eval(&self, w: &[f64]) -> f64 {
        match self {
            Weight::Constant(c) => *c,
            Weight::Linear { c0, c } => c0 + c.iter().zip(w).map(|(a, b)| a * b.abs()).sum::<f64>(),
            Weight::Power { c0, c1, p } => c0 + c1 * norm(w).powf(*p),
        }
    }

    /// Growth exponent in |W|.
    pub fn growth(&self) -> f64 {
        match self {
            Weight::Constant(_) => 0.0,
            Weight::Linear { c, .. } => {
                if c.iter().any(|v| *v != 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
            Weight::Power { c1, p, .. } => {
                if *c1 != 0.0 {
                    *p
                } else {
                    0.0
                }
            }
        }
    }
}

pub(crate) fn norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Potential map `a(u)` whose Jacobian is a diffusion matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialMap {
    /// `a(u) = M u` with row-major `M`.
    Linear { m: usize, matrix: Vec<f64> },
    /// `a_i(u) = (d_i + Σ_j α_ij u_j) u_i`.
    Skt { d: Vec<f64>, alpha: Vec<f64> },
    /// `a_i(u) = |u|^{m_i − 1} u_i`.
    DiagonalPowerLaw { exps: Vec<f64> },
    /// `a_i(u) = |u_i|^{m_i − 1} u_i`.
    DiagonalSeparate { exps: Vec<f64> },
    /// `a_i(u) = (K + |u|²)^{(m₀ − 1)/2} u_i`.
    KShifted { m: usize, k_shift: f64, m0: f64 },
}

impl PotentialMap {
    pub fn m(&self) -> usize {
        match self {
            PotentialMap::Linear { m, .. } => *m,
            PotentialMap::Skt { d, .. } => d.len(),
            PotentialMap::DiagonalPowerLaw { exps } | PotentialMap::DiagonalSeparate { exps } => {
                exps.len()
            }
            PotentialMap::KShifted { m, .. } => *m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if m == 0 {
            return Err(Error::Config("potential map needs at least one component".into()));
        }
        match self {
            PotentialMap::Linear { matrix, .. } if matrix.len() != m * m => Err(Error::Config(
                format!("linear map needs {} matrix entries", m * m),
            )),
            PotentialMap::Skt { alpha, .. } if alpha.len() != m * m => Err(Error::Config(
                format!("SKT needs {} cross coefficients", m * m),
            )),
            PotentialMap::DiagonalPowerLaw { exps } | PotentialMap::DiagonalSeparate { exps }
                if exps.iter().any(|e| *e < 1.0) =>
            {
                Err(Error::Config("power-law exponents must be ≥ 1".into()))
            }
            PotentialMap::KShifted { k_shift, m0, .. } if *k_shift < 0.0 || *m0 < 1.0 => {
                Err(Error::Config("K-shifted map needs K ≥ 0 and m₀ ≥ 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, u: &[f64], out: &mut [f64]) {
        match self {
            PotentialMap::Linear { m, matrix } => {
                for i in 0..*m {
                    out[i] = (0..*m).map(|j| matrix[i * m + j] * u[j]).sum();
                }
            }
            PotentialMap::Skt { d, alpha } => {
                let m = d.len();
                for i in 0..m {
                    let s: f64 = (0..m).map(|j| alpha[i * m + j] * u[j]).sum();
                    out[i] = (d[i] + s) * u[i];
                }
            }
            PotentialMap::DiagonalPowerLaw { exps } => {
                let r = norm(u);
                for (i, e) in exps.iter().enumerate() {
                    out[i] = pow_or_one(r, e - 1.0) * u[i];
                }
            }
            PotentialMap::DiagonalSeparate { exps } => {
                for (i, e) in exps.iter().enumerate() {
                    out[i] = pow_or_one(u[i].abs(), e - 1.0) * u[i];
                }
            }
            PotentialMap::KShifted { m, k_shift, m0 } => {
                let r2: f64 = u.iter().map(|v| v * v).sum();
                let f = pow_or_one(k_shift + r2, 0.5 * (m0 - 1.0));
                for i in 0..*m {
                    out[i] = f * u[i];
                }
            }
        }
    }

    /// Row-major Jacobian `(a_u)_{ij} = ∂a_i/∂u_j`.
    pub fn jacobian(&self, u: &[f64], out: &mut [f64]) {
        let m = self.m();
        out[..m * m].iter_mut().for_each(|v| *v = 0.0);
        match self {
            PotentialMap::Linear { matrix, .. } => out[..m * m].copy_from_slice(matrix),
            PotentialMap::Skt { d, alpha } => {
                for i in 0..m {
                    let s: f64 = (0..m).map(|j| alpha[i * m + j] * u[j]).sum();
                    for j in 0..m {
                        out[i * m + j] = alpha[i * m + j] * u[i];
                    }
                    out[i * m + i] += d[i] + s;
                }
            }
            PotentialMap::DiagonalPowerLaw { exps } => {
                let r = norm(u);
                for (i, e) in exps.iter().enumerate() {
                    let base = pow_or_one(r, e - 1.0);
                    out[i * m + i] = base;
                    if r > 0.0 && *e != 1.0 {
                        for j in 0..m {
                            out[i * m + j] += (e - 1.0) * base * (u[i] / r) * (u[j] / r);
                        }
                    }
                }
            }
            PotentialMap::DiagonalSeparate { exps } => {
                for (i, e) in exps.iter().enumerate() {
                    out[i * m + i] = e * pow_or_one(u[i].abs(), e - 1.0);
                }
            }
            PotentialMap::KShifted { k_shift, m0, .. } => {
                let q = k_shift + u.iter().map(|v| v * v).sum::<f64>();
                let f = pow_or_one(q, 0.5 * (m0 - 1.0));
                for i in 0..m {
                    out[i * m + i] = f;
                    if q > 0.0 {
                        for j in 0..m {
                            out[i * m + j] += (m0 - 1.0) * f / q * u[i] * u[j];
                        }
                    }
                }
            }
        }
    }

    /// Closed-form `∫₀¹ ⟨a(ρu), u⟩ dρ` where one is available.
    pub fn phi_density_closed(&self, u: &[f64]) -> Option<f64> {
        match self {
            PotentialMap::DiagonalPowerLaw { exps } => {
                let r = norm(u);
                Some(
                    exps.iter()
                        .enumerate()
                        .map(|(i, e)| pow_or_one(r, e - 1.0) * u[i] * u[i] / (e + 1.0))
                        .sum(),
                )
            }
            PotentialMap::DiagonalSeparate { exps } => Some(
                exps.iter()
                    .enumerate()
                    .map(|(i, e)| pow_or_one(u[i].abs(), e + 1.0) / (e + 1.0))
                    .sum(),
            ),
            PotentialMap::Linear { m, matrix } => {
                let mut s = 0.0;
                for i in 0..*m {
                    for j in 0..*m {
                        s += u[i] * matrix[i * m + j] * u[j];
                    }
                }
                Some(0.5 * s)
            }
            _ => None,
        }
    }

    /// Homogeneity degree `d` with `a(su) = s^d a(u)` when the map has one.
    pub fn homogeneity(&self) -> Option<f64> {
        match self {
            PotentialMap::Linear { .. } => Some(1.0),
            PotentialMap::DiagonalPowerLaw { exps } | PotentialMap::DiagonalSeparate { exps } => {
                let e0 = exps[0];
                exps.iter().all(|e| *e == e0).then_some(e0)
            }
            PotentialMap::KShifted { k_shift, m0, .. } => (*k_shift == 0.0).then_some(*m0),
            PotentialMap::Skt { d, alpha } => {
                if alpha.iter().all(|a| *a == 0.0) {
                    Some(1.0)
                } else if d.iter().all(|v| *v == 0.0) {
                    Some(2.0)
                } else {
                    None
                }
            }
        }
    }
}

/// `x^p`, with `0^0 = 1` and `0^p = 0` for `p > 0`.
pub(crate) fn pow_or_one(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if x == 0.0 {
        if p > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        x.powf(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_jacobian(map: &PotentialMap, u: &[f64]) -> Vec<f64> {
        let m = map.m();
        let mut out = vec![0.0; m * m];
        let mut up = u.to_vec();
        let mut ap = vec![0.0; m];
        let mut am = vec![0.0; m];
        for j in 0..m {
            let h = 1e-6 * (1.0 + u[j].abs());
            up[j] = u[j] + h;
            map.eval(&up, &mut ap);
            up[j] = u[j] - h;
            map.eval(&up, &mut am);
            up[j] = u[j];
            for i in 0..m {
                out[i * m + j] = (ap[i] - am[i]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn poly_hat_and_derivative() {
        let p = Poly(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.eval(2.0), 17.0);
        assert_eq!(p.derivative(2.0), 14.0);
        assert!((p.hat(2.0) - (2.0 + 4.0 + 8.0)).abs() < 1e-14);
    }

    #[test]
    fn power_law_jacobian_at_three_four() {
        let map = PotentialMap::DiagonalPowerLaw { exps: vec![2.0, 2.0] };
        let mut jac = vec![0.0; 4];
        map.jacobian(&[3.0, 4.0], &mut jac);
        // (m0 − 1)|u|^{m0−3} u_i u_j + δ_ij |u|^{m0−1}
        let expect = [9.0 / 5.0 + 5.0, 12.0 / 5.0, 12.0 / 5.0, 16.0 / 5.0 + 5.0];
        for (a, b) in jac.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let fd = fd_jacobian(&map, &[3.0, 4.0]);
        for (a, b) in jac.iter().zip(fd) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_jacobian_is_zero_at_origin() {
        let map = PotentialMap::DiagonalPowerLaw { exps: vec![2.5, 2.5, 2.5] };
        let mut jac = vec![1.0; 9];
        map.jacobian(&[0.0; 3], &mut jac);
        assert!(jac.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn every_map_matches_finite_differences() {
        let maps = [
            PotentialMap::Linear { m: 2, matrix: vec![1.0, 0.5, -0.2, 2.0] },
            PotentialMap::Skt { d: vec![1.0, 2.0], alpha: vec![0.1, 0.4, 0.3, 0.05] },
            PotentialMap::DiagonalPowerLaw { exps: vec![2.0, 3.5] },
            PotentialMap::DiagonalSeparate { exps: vec![1.5, 4.0] },
            PotentialMap::KShifted { m: 2, k_shift: 0.7, m0: 3.0 },
        ];
        for map in &maps {
            let u = [0.8, -1.3];
            let mut jac = vec![0.0; 4];
            map.jacobian(&u, &mut jac);
            for (a, b) in jac.iter().zip(fd_jacobian(map, &u)) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{map:?}");
            }
        }
    }
}
