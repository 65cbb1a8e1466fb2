use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::phi_density;
use crate::models::PotentialMap;

/// Draws `(u, ξ)` pairs: uniform `u` in `[lo, hi]^m` and `ξ` in `[−1, 1]^m`,
/// plus structured states along every coordinate axis and the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampler {
    pub count: usize,
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
    /// Restrict states to `u ≥ 0` componentwise.
    pub nonnegative: bool,
    /// Drop states with `|u| <` this radius.
    pub exclude_radius: f64,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler {
            count: 100_000,
            seed: 0,
            lo: -2.0,
            hi: 2.0,
            nonnegative: false,
            exclude_radius: 0.0,
        }
    }
}

const STRUCTURED_LEVELS: usize = 16;

impl Sampler {
    fn low(&self) -> f64 {
        if self.nonnegative {
            self.lo.max(0.0)
        } else {
            self.lo
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hi > self.low()) || !(self.hi > 0.0) {
            return Err(Error::Config(format!(
                "sampler box [{}, {}] is empty",
                self.low(),
                self.hi
            )));
        }
        if !(self.exclude_radius >= 0.0) {
            return Err(Error::Config("exclusion radius must be ≥ 0".into()));
        }
        Ok(())
    }

    /// States only: structured directions first, then the random draws.
    pub fn states(&self, m: usize) -> Vec<Vec<f64>> {
        let lo = self.low();
        let mut dirs: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        if m > 1 {
            let d = 1.0 / (m as f64).sqrt();
            dirs.push(vec![d; m]);
        }
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.count + dirs.len() * 2 * STRUCTURED_LEVELS);
        for dir in &dirs {
            for l in 1..=STRUCTURED_LEVELS {
                let t = self.hi * l as f64 / STRUCTURED_LEVELS as f64;
                out.push(dir.iter().map(|v| v * t).collect());
                if lo < 0.0 {
                    let t = lo * l as f64 / STRUCTURED_LEVELS as f64;
                    out.push(dir.iter().map(|v| v * t).collect());
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.count {
            out.push((0..m).map(|_| rng.gen_range(lo..=self.hi)).collect());
        }
        out.retain(|u| u.iter().map(|v| v * v).sum::<f64>().sqrt() >= self.exclude_radius);
        out
    }

    /// `(u, ξ)` pairs. Structured states are paired with every axis, the
    /// diagonal and `ξ = u`; random states get a random `ξ`.
    pub fn draw(&self, m: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let states = self.states(m);
        let n_structured = states.len().saturating_sub(self.count);
        let mut xis: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        if m > 1 {
            xis.push(vec![1.0; m]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::new();
        for (n, u) in states.into_iter().enumerate() {
            if n < n_structured {
                for xi in &xis {
                    out.push((u.clone(), xi.clone()));
                }
                out.push((u.clone(), u));
            } else {
                let xi = (0..m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                out.push((u, xi));
            }
        }
        out
    }
}

/// Result of [`kappa_infimum`].
#[derive(Clone, Debug, PartialEq)]
pub struct KappaEstimate {
    /// Smallest admissible κ on the samples (∞ if some ratio is unbounded).
    pub kappa: f64,
    pub worst_u: Vec<f64>,
    pub worst_xi: Vec<f64>,
    /// Samples that entered the supremum.
    pub used: usize,
}

fn density(map: &PotentialMap, u: &[f64]) -> f64 {
    map.phi_density_closed(u).unwrap_or_else(|| phi_density(map, u))
}

/// `κ̂ = sup ⟨a(u), ξ⟩² / (2 ⟨ξ, a_u(u) ξ⟩ (∫₀¹⟨a(ρu), u⟩dρ + offset))`.
///
/// Pairs with zero numerator and non-positive denominator are skipped; a
/// positive numerator over a non-positive denominator makes κ̂ infinite.
/// `offset` adds a constant to the φ-density, as a positive potential
/// constant does.
pub fn kappa_infimum(map: &PotentialMap, samples: &[(Vec<f64>, Vec<f64>)], offset: f64) -> Result<KappaEstimate> {
    let m = map.m();
    if samples.iter().any(|(u, xi)| u.len() != m || xi.len() != m) {
        return Err(Error::Shape(format!("samples must have {m} components")));
    }
    let best = samples
        .par_iter()
        .enumerate()
        .map_init(
            || (vec![0.0; m], vec![0.0; m * m]),
            |(a, jac), (n, (u, xi))| {
                map.eval(u, a);
                map.jacobian(u, jac);
                let num = a.iter().zip(xi).map(|(x, y)| x * y).sum::<f64>().powi(2);
                let mut q = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        q += xi[i] * jac[i * m + j] * xi[j];
                    }
                }
                let den = 2.0 * q * (density(map, u) + offset);
                if den > 0.0 {
                    Some((num / den, n))
                } else if num == 0.0 {
                    None
                } else {
                    Some((f64::INFINITY, n))
                }
            },
        )
        .flatten()
        .map(|(r, n)| (r, n, 1usize))
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX, 0),
            |x, y| {
                let used = x.2 + y.2;
                // ties go to the earlier sample so the result is order independent
                if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                    (y.0, y.1, used)
                } else {
                    (x.0, x.1, used)
                }
            },
        );
    if best.2 == 0 {
        return Err(Error::Precondition("no sample has a positive denominator".into()));
    }
    let (u, xi) = &samples[best.1];
    Ok(KappaEstimate {
        kappa: best.0,
        worst_u: u.clone(),
        worst_xi: xi.clone(),
        used: best.2,
    })
}

/// Pairs each state with `ξ* = S⁻¹ a(u)`, `S` the symmetric part of `a_u`.
///
/// When `S` is positive definite, `ξ*` maximizes the κ-ratio at fixed `u`
/// (Cauchy–Schwarz in the `S` inner product). States where `S` is singular are
/// paired with `ξ = u`.
pub fn aligned_samples(map: &PotentialMap, states: &[Vec<f64>]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let m = map.m();
    let mut a = vec![0.0; m];
    let mut jac = vec![0.0; m * m];
    states
        .iter()
        .map(|u| {
            map.eval(u, &mut a);
            map.jacobian(u, &mut jac);
            let mut s = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    s[i * m + j] = 0.5 * (jac[i * m + j] + jac[j * m + i]);
                }
            }
            let xi = solve(&mut s, a.clone(), m).unwrap_or_else(|| u.clone());
            (u.clone(), xi)
        })
        .collect()
}

/// Gaussian elimination with partial pivoting.
fn solve(a: &mut [f64], mut b: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))?;
        if a[piv * m + col].abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..m {
            let f = a[r * m + col] / a[col * m + col];
            for k in col..m {
                a[r * m + k] -= f * a[col * m + k];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..m).rev() {
        let mut s = b[col];
        for k in col + 1..m {
            s -= a[col * m + k] * b[k];
        }
        b[col] = s / a[col * m + col];
    }
    Some(b)
}
