use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CertificateReport, ConditionCheck};
use crate::error::{Error, Result};
use crate::mesh::{gradient, integrate, FieldSet};

type Map1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar diffusion/reaction pair with potentials: `a`, `A = ∫₀ᵘ a + C`,
/// `b` and `B`.
#[derive(Clone)]
pub struct ScalarMaps {
    pub a: Map1,
    pub big_a: Map1,
    pub b: Map1,
    pub big_b: Map1,
}

impl fmt::Debug for ScalarMaps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarMaps")
    }
}

impl ScalarMaps {
    pub fn new(
        a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        big_a: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        big_b: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> ScalarMaps {
        ScalarMaps {
            a: Arc::new(a),
            big_a: Arc::new(big_a),
            b: Arc::new(b),
            big_b: Arc::new(big_b),
        }
    }

    /// `a = |u|^{m₀−1}u`, `b = β|u|^p u`, `A = |u|^{m₀+1}/(m₀+1)` and
    /// `B = γ · 2βm₀ |u|^{m₀+p+1}/(m₀+p+1)`, so `B' = 2γ a' b`.
    pub fn power(m0: f64, beta: f64, p: f64, gamma: f64) -> ScalarMaps {
        let e = m0 + p + 1.0;
        ScalarMaps::new(
            move |u| u.abs().powf(m0 - 1.0) * u,
            move |u| u.abs().powf(m0 + 1.0) / (m0 + 1.0),
            move |u| beta * u.abs().powf(p) * u,
            move |u| gamma * 2.0 * beta * m0 * u.abs().powf(e) / e,
        )
    }
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;

/// Central difference with a step relative to `|u|`, plus the rounding floor
/// of the difference quotient.
fn central(f: &dyn Fn(f64) -> f64, u: f64) -> (f64, f64) {
    let h = FD_STEP * if u != 0.0 { u.abs() } else { 1.0 };
    let (fp, fm) = (f(u + h), f(u - h));
    ((fp - fm) / (2.0 * h), f64::EPSILON * (fp.abs() + fm.abs()) / h)
}

struct Worst {
    name: &'static str,
    value: f64,
    at: Vec<f64>,
    samples: usize,
}

impl Worst {
    fn new(name: &'static str) -> Worst {
        Worst {
            name,
            value: f64::NEG_INFINITY,
            at: Vec::new(),
            samples: 0,
        }
    }

    fn see(&mut self, value: f64, at: &[f64]) {
        self.samples += 1;
        // NaN counts as the worst possible outcome
        if value > self.value || (value.is_nan() && !self.value.is_nan()) {
            self.value = value;
            self.at = at.to_vec();
        }
    }

    fn check(self, pass: impl Fn(f64) -> bool) -> ConditionCheck {
        ConditionCheck {
            name: self.name.to_string(),
            pass: self.samples > 0 && pass(self.value),
            worst_sample: self.at,
            residual: self.value,
            samples: self.samples,
        }
    }
}

/// Certificate for a diagonal system `u_t = Δ a(u) + 𝐜·Du + b(u)` with
/// `a = diag[a_i(u_i)]`, `B(u) = Σ B_i(u_i)`.
///
/// Checks, on `samples` points per component of `(0, 10 · sup u0_i]` plus
/// joint draws in the product box:
///
/// - `a_prime_nonnegative`: residual `max(−a_i')`, passes at ≤ 0;
/// - `B_below_ab`: residual `max(B + |a|²|𝐜|²/(4(γ−1)σ²) − ⟨a, b⟩)` with
///   `σ = min_i a_i'`, passes at < 0 (the convection term is absent for `𝐜 = 0`);
/// - `potential_identity`: relative mismatch of `B_i' = 2γ a_i' b_i` by central
///   differences, passes at ≤ 1e−6;
/// - `k_condition`: residual `max((a_i² − k² a_i' A_i) / a_i²)`, passes at ≤ 1e−6;
/// - `convection_orthogonality` (only for `𝐜 ≠ 0`): `max_i |a_i' c_i|`, passes at 0.
///
/// `φ(0) = ∫ Σ A_i(u0_i)`, `ψ(0) = −γ ∫|Da(u0)|² + ∫ B(u0)`, `c = 2/k²`.
pub fn diagonal_certificate(
    maps: &[ScalarMaps],
    k: f64,
    gamma: f64,
    convection: &[f64],
    u0: &FieldSet,
    samples: usize,
    seed: u64,
) -> Result<CertificateReport> {
    let m = maps.len();
    if m == 0 || u0.m() != m {
        return Err(Error::Shape(format!(
            "{} scalar maps for a field with {} components",
            m,
            u0.m()
        )));
    }
    if !(k > 0.0 && k < std::f64::consts::SQRT_2) {
        return Err(Error::Precondition(format!("k = {k} must lie in (0, √2)")));
    }
    if !(gamma >= 1.0) {
        return Err(Error::Precondition(format!("γ = {gamma} must be ≥ 1")));
    }
    if !convection.is_empty() && convection.len() != m {
        return Err(Error::Shape(format!("convection needs {m} entries")));
    }
    if samples == 0 {
        return Err(Error::Precondition("certificate needs at least one sample".into()));
    }
    let conv2: f64 = convection.iter().map(|c| c * c).sum();
    if conv2 > 0.0 && !(gamma > 1.0) {
        return Err(Error::Precondition("convection needs γ > 1".into()));
    }
    let n = u0.n_cells();
    let umax: Vec<f64> = (0..m)
        .map(|c| {
            let s = u0.component(c).iter().fold(0.0f64, |s, v| s.max(v.abs()));
            if s > 0.0 && s.is_finite() {
                10.0 * s
            } else {
                1.0
            }
        })
        .collect();

    let mut a_prime = Worst::new("a_prime_nonnegative");
    let mut below = Worst::new("B_below_ab");
    let mut ident = Worst::new("potential_identity");
    let mut kcond = Worst::new("k_condition");
    let mut ortho = Worst::new("convection_orthogonality");

    // per-component 1d conditions on a dense grid
    for (i, mp) in maps.iter().enumerate() {
        for j in 1..=samples {
            let t = umax[i] * j as f64 / samples as f64;
            let mut at = vec![0.0; m];
            at[i] = t;
            let (ap, _) = central(&*mp.a, t);
            a_prime.see(-ap, &at);
            let (bp, round) = central(&*mp.big_b, t);
            let rhs = 2.0 * gamma * ap * (mp.b)(t);
            let scale = bp.abs() + rhs.abs();
            let mismatch = (bp - rhs).abs() - 4.0 * round;
            ident.see(if scale > 0.0 { mismatch.max(0.0) / scale } else { 0.0 }, &at);
            let a = (mp.a)(t);
            if a != 0.0 {
                kcond.see((a * a - k * k * ap * (mp.big_a)(t)) / (a * a), &at);
            }
        }
    }

    // joint states: axes, diagonal, random draws
    let mut states: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        for j in 1..=samples {
            let mut u = vec![0.0; m];
            u[i] = umax[i] * j as f64 / samples as f64;
            states.push(u);
        }
    }
    if m > 1 {
        for j in 1..=samples {
            states.push((0..m).map(|i| umax[i] * j as f64 / samples as f64).collect());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            states.push((0..m).map(|i| rng.gen_range(0.0..=umax[i])).collect());
        }
    }
    for u in &states {
        let mut ab = 0.0;
        let mut bb = 0.0;
        let mut a2 = 0.0;
        let mut sigma = f64::INFINITY;
        let mut orth = 0.0f64;
        for (i, mp) in maps.iter().enumerate() {
            let a = (mp.a)(u[i]);
            ab += a * (mp.b)(u[i]);
            bb += (mp.big_b)(u[i]);
            a2 += a * a;
            if conv2 > 0.0 {
                let (ap, _) = central(&*mp.a, u[i]);
                sigma = sigma.min(ap.abs());
                orth = orth.max((ap * convection[i]).abs());
            }
        }
        let drift = if conv2 > 0.0 && a2 > 0.0 {
            a2 * conv2 / (4.0 * (gamma - 1.0) * sigma * sigma)
        } else {
            0.0
        };
        below.see(bb + drift - ab, u);
        if conv2 > 0.0 {
            ortho.see(orth, u);
        }
    }

    let mut checks = vec![
        a_prime.check(|v| v <= 0.0),
        below.check(|v| v < 0.0),
        ident.check(|v| v <= FD_TOL),
        kcond.check(|v| v <= FD_TOL),
    ];
    if conv2 > 0.0 {
        checks.push(ortho.check(|v| v == 0.0));
    }

    let g = u0.grid();
    let mut au = FieldSet::zeros(g, m);
    let mut big_a = vec![0.0; n];
    let mut big_b = vec![0.0; n];
    for (i, mp) in maps.iter().enumerate() {
        for cell in 0..n {
            let v = u0.get(i, cell);
            au.component_mut(i)[cell] = (mp.a)(v);
            big_a[cell] += (mp.big_a)(v);
            big_b[cell] += (mp.big_b)(v);
        }
    }
    let da = gradient(g, &au)?;
    let phi0 = integrate(g, &big_a);
    let psi0 = -gamma * integrate(g, &da.squared_norm()) + integrate(g, &big_b);
    CertificateReport::assemble(checks, phi0, psi0, 2.0 / (k * k), false)
}

/// Scalar blow-up certificate with `c = 2/k²`; see [`diagonal_certificate`]
/// for the checks and their residuals.
pub fn scalar_certificate(maps: &ScalarMaps, k: f64, u0: &FieldSet, samples: usize) -> Result<CertificateReport> {
    diagonal_certificate(std::slice::from_ref(maps), k, 1.0, &[], u0, samples, 0)
}

/// Diagonal certificate with convection `𝐜` and weight `γ > 1`. The maps'
/// `B` must already satisfy `B' = 2γ a' b`.
pub fn convection_certificate(
    maps: &[ScalarMaps],
    convection: &[f64],
    gamma: f64,
    k: f64,
    u0: &FieldSet,
    samples: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if !(gamma > 1.0) {
        return Err(Error::Precondition(format!("γ = {gamma} must exceed 1")));
    }
    diagonal_certificate(maps, k, gamma, convection, u0, samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::Verdict;
    use crate::mesh::{Bc, Grid};
    use std::f64::consts::PI;

    fn porous() -> ScalarMaps {
        ScalarMaps::power(2.0, 1.0, 2.0, 1.0)
    }

    fn sine(amp: f64) -> FieldSet {
        let g = Grid::boxed(&[1.0], &[128], Bc::DirichletZero).unwrap();
        FieldSet::scalar(&g, |x| amp * (PI * x[0]).sin())
    }

    #[test]
    fn porous_medium_conditions_pass() {
        let r = scalar_certificate(&porous(), 1.5f64.sqrt(), &sine(40.0), 2000).unwrap();
        assert!(r.checks.iter().all(|c| c.pass), "{}", r.render());
        assert!((r.c - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::BlowupCertified);
        let h = r.horizon.unwrap();
        assert!((h - r.phi0 / (r.psi0 / 3.0)).abs() < 1e-12 * h);
    }

    #[test]
    fn small_data_is_insufficient() {
        let r = scalar_certificate(&porous(), 1.5f64.sqrt(), &sine(1.0), 500).unwrap();
        assert!(r.psi0 <= 0.0);
        assert_eq!(r.verdict, Verdict::InitialDataInsufficient);
        assert_eq!(r.horizon, None);
    }

    #[test]
    fn k_too_small_fails_condition() {
        let r = scalar_certificate(&porous(), 1.2, &sine(40.0), 500).unwrap();
        assert!(matches!(&r.verdict, Verdict::ConditionsFailed(v) if v == &vec!["k_condition".to_string()]));
    }

    #[test]
    fn k_range_is_enforced() {
        assert!(scalar_certificate(&porous(), 1.5, &sine(1.0), 10).is_err());
        assert!(scalar_certificate(&porous(), 0.0, &sine(1.0), 10).is_err());
    }

    #[test]
    fn zero_convection_reduces_to_weighted_psi() {
        let u0 = sine(40.0);
        let gamma = 1.1;
        let maps = ScalarMaps::power(2.0, 1.0, 2.0, gamma);
        let a = convection_certificate(std::slice::from_ref(&maps), &[0.0], gamma, 1.5f64.sqrt(), &u0, 500, 0).unwrap();
        let b = diagonal_certificate(std::slice::from_ref(&maps), 1.5f64.sqrt(), gamma, &[], &u0, 500, 0).unwrap();
        assert_eq!(a, b);
        // B scales with γ here, so ψ_γ = γ ψ_1
        let plain = scalar_certificate(&porous(), 1.5f64.sqrt(), &u0, 500).unwrap();
        assert!((a.psi0 - gamma * plain.psi0).abs() < 1e-9 * plain.psi0.abs());
    }

    #[test]
    fn convection_demands_stronger_data() {
        // β = 1/γ keeps B fixed while B' = 2γ a' b holds for each γ
        let maps = |gamma: f64| ScalarMaps::power(2.0, 1.0 / gamma, 6.0, gamma);
        let psi = |amp: f64, gamma: f64| {
            diagonal_certificate(&[maps(gamma)], 1.5f64.sqrt(), gamma, &[], &sine(amp), 10, 0)
                .unwrap()
                .psi0
        };
        let (mut lo, mut hi) = (0.1, 10.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if psi(mid, 1.0) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let amp = hi * 1.01;
        assert!(psi(amp, 1.0) > 0.0);
        let r = convection_certificate(&[maps(2.0)], &[0.0], 2.0, 1.5f64.sqrt(), &sine(amp), 500, 0).unwrap();
        assert!(r.psi0 <= 0.0);
        assert_eq!(r.verdict, Verdict::InitialDataInsufficient, "{}", r.render());
    }

    #[test]
    fn orthogonality_violation_is_named() {
        let gamma = 1.1;
        let maps = ScalarMaps::power(2.0, 1.0, 2.0, gamma);
        let r = convection_certificate(&[maps], &[0.5], gamma, 1.5f64.sqrt(), &sine(40.0), 200, 0).unwrap();
        let ck = r.checks.iter().find(|c| c.name == "convection_orthogonality").unwrap();
        assert!(!ck.pass);
        assert!(ck.worst_sample[0] > 0.0);
        assert!(matches!(r.verdict, Verdict::ConditionsFailed(ref v) if v.contains(&"convection_orthogonality".to_string())));
    }

    #[test]
    fn gamma_guard() {
        let maps = ScalarMaps::power(2.0, 1.0, 2.0, 1.0);
        assert!(convection_certificate(&[maps], &[0.0], 1.0, 1.2, &sine(1.0), 10, 0).is_err());
    }
}
