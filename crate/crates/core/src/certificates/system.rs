use rayon::prelude::*;

use super::kappa::{kappa_infimum, Sampler};
use super::{CertificateReport, ConditionCheck};
use crate::error::{Error, Result};
use crate::functionals::{levine_phi, levine_psi};
use crate::mesh::FieldSet;
use crate::models::{PotentialMap, Reaction};

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;

fn worst_of(name: &str, vals: Vec<(f64, usize)>, states: &[Vec<f64>], pass: impl Fn(f64) -> bool) -> ConditionCheck {
    let samples = vals.len();
    let (value, at) = vals
        .into_iter()
        .fold((f64::NEG_INFINITY, usize::MAX), |(bv, bi), (v, i)| {
            if v > bv || (v.is_nan() && !bv.is_nan()) {
                (v, i)
            } else {
                (bv, bi)
            }
        });
    ConditionCheck {
        name: name.to_string(),
        pass: samples > 0 && pass(value),
        worst_sample: states.get(at).cloned().unwrap_or_default(),
        residual: value,
        samples,
    }
}

/// Certificate for `u_t = Δ a(u) + b(u)` with a vector map `a` and a reaction
/// carrying a scalar potential `B`.
///
/// Checks on the sampler's states (and `(u, ξ)` pairs):
///
/// - `B_below_ab`: `max(B − ⟨a, b⟩)` over `u ≠ 0`, passes at < 0;
/// - `potential_identity`: relative mismatch of `∇B = 2 a_uᵀ b` by central
///   differences, passes at ≤ 1e−6;
/// - `a_dot_u_nonnegative`: `max(−⟨a(u), u⟩)`, passes at ≤ 0;
/// - `a_u_semidefinite`: `max(−⟨a_u ξ, ξ⟩ / |ξ|²)`, passes at ≤ 0;
/// - `kappa_condition`: `κ̂ − κ` from [`kappa_infimum`], passes at ≤ 0.
///
/// `φ(0)` and `ψ(0)` are the Levine potentials of `u0`; `c = 1/(2κ)`.
pub fn system_certificate(
    map: &PotentialMap,
    reaction: &Reaction,
    kappa: f64,
    u0: &FieldSet,
    sampler: &Sampler,
) -> Result<CertificateReport> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::Precondition(format!("κ = {kappa} must lie in (0, 1/2)")));
    }
    let m = map.m();
    if u0.m() != m {
        return Err(Error::Shape(format!("map has {m} components, field has {}", u0.m())));
    }
    if reaction.big_b(&vec![0.0; m]).is_none() {
        return Err(Error::MissingPotential);
    }
    sampler.validate()?;
    let pairs = sampler.draw(m);
    let states: Vec<Vec<f64>> = sampler.states(m);

    let per_state: Vec<(Option<f64>, f64, f64)> = states
        .par_iter()
        .map(|u| {
            let mut a = vec![0.0; m];
            let mut b = vec![0.0; m];
            let mut jac = vec![0.0; m * m];
            map.eval(u, &mut a);
            reaction.eval_into(u, None, &mut b);
            map.jacobian(u, &mut jac);
            let big_b = |v: &[f64]| reaction.big_b(v).unwrap_or(f64::NAN);
            let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            let r2: f64 = u.iter().map(|v| v * v).sum();
            let below = (r2 > 0.0).then(|| big_b(u) - ab);
            let mut worst_ident = 0.0f64;
            let scale_u = r2.sqrt();
            let h = FD_STEP * if scale_u > 0.0 { scale_u } else { 1.0 };
            let mut up = u.clone();
            for j in 0..m {
                up[j] = u[j] + h;
                let fp = big_b(&up);
                up[j] = u[j] - h;
                let fm = big_b(&up);
                up[j] = u[j];
                let fd = (fp - fm) / (2.0 * h);
                let round = f64::EPSILON * (fp.abs() + fm.abs()) / h;
                let rhs: f64 = 2.0 * (0..m).map(|i| jac[i * m + j] * b[i]).sum::<f64>();
                let scale = fd.abs() + rhs.abs();
                if scale > 0.0 {
                    worst_ident = worst_ident.max(((fd - rhs).abs() - 4.0 * round).max(0.0) / scale);
                }
            }
            let au: f64 = a.iter().zip(u).map(|(x, y)| x * y).sum();
            (below, worst_ident, -au)
        })
        .collect();

    let below: Vec<(f64, usize)> = per_state
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.0.map(|v| (v, i)))
        .collect();
    let ident: Vec<(f64, usize)> = per_state.iter().enumerate().map(|(i, s)| (s.1, i)).collect();
    let au: Vec<(f64, usize)> = per_state.iter().enumerate().map(|(i, s)| (s.2, i)).collect();

    let semidef: Vec<(f64, usize)> = pairs
        .par_iter()
        .enumerate()
        .map(|(n, (u, xi))| {
            let mut jac = vec![0.0; m * m];
            map.jacobian(u, &mut jac);
            let x2: f64 = xi.iter().map(|v| v * v).sum();
            let mut q = 0.0;
            for i in 0..m {
                for j in 0..m {
                    q += xi[i] * jac[i * m + j] * xi[j];
                }
            }
            (if x2 > 0.0 { -q / x2 } else { 0.0 }, n)
        })
        .collect();
    let pair_states: Vec<Vec<f64>> = pairs.iter().map(|(u, _)| u.clone()).collect();

    let kap = kappa_infimum(map, &pairs, 0.0)?;
    let kappa_check = ConditionCheck {
        name: "kappa_condition".into(),
        pass: kap.kappa <= kappa,
        worst_sample: kap.worst_u.clone(),
        residual: kap.kappa - kappa,
        samples: kap.used,
    };

    let checks = vec![
        worst_of("B_below_ab", below, &states, |v| v < 0.0),
        worst_of("potential_identity", ident, &states, |v| v <= FD_TOL),
        worst_of("a_dot_u_nonnegative", au, &states, |v| v <= 0.0),
        worst_of("a_u_semidefinite", semidef, &pair_states, |v| v <= 0.0),
        kappa_check,
    ];
    let phi0 = levine_phi(u0, map)?;
    let r = reaction.clone();
    let psi0 = levine_psi(u0, map, &move |v| r.big_b(v).unwrap_or(f64::NAN))?;
    CertificateReport::assemble(checks, phi0, psi0, 1.0 / (2.0 * kappa), sampler.exclude_radius > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::{kappa_infimum, Verdict};
    use crate::mesh::{Bc, Grid};
    use std::f64::consts::PI;

    fn sampler(count: usize) -> Sampler {
        Sampler {
            count,
            seed: 3,
            lo: 0.0,
            hi: 4.0,
            nonnegative: true,
            ..Default::default()
        }
    }

    fn bump(m: usize, amp: f64) -> FieldSet {
        let g = Grid::boxed(&[1.0], &[64], Bc::DirichletZero).unwrap();
        FieldSet::from_fn(&g, m, |x, w| {
            for (c, v) in w.iter_mut().enumerate() {
                *v = amp * (1.0 + 0.1 * c as f64) * (PI * x[0]).sin();
            }
        })
    }

    #[test]
    fn kappa_range_is_enforced() {
        let map = PotentialMap::DiagonalPowerLaw { exps: vec![2.0] };
        let r = Reaction::power_pair(1.0, 2.0, 2.0);
        assert!(system_certificate(&map, &r, 0.5, &bump(1, 1.0), &sampler(10)).is_err());
        assert!(system_certificate(&map, &Reaction::PowerLaw { coef: 1.0, power: 2.0 }, 0.4, &bump(1, 1.0), &sampler(10)).is_err());
    }

    #[test]
    fn identity_map_fails_kappa() {
        let map = PotentialMap::Linear { m: 2, matrix: vec![1.0, 0.0, 0.0, 1.0] };
        let r = Reaction::power_pair(1.0, 2.0, 1.0);
        let rep = system_certificate(&map, &r, 0.45, &bump(2, 5.0), &sampler(2000)).unwrap();
        let k = rep.checks.iter().find(|c| c.name == "kappa_condition").unwrap();
        assert!(!k.pass);
        assert!((k.residual + 0.45 - 1.0).abs() < 1e-12);
        assert!(matches!(rep.verdict, Verdict::ConditionsFailed(_)));
    }

    #[test]
    fn power_pair_structural_conditions_hold() {
        for m in [1, 3] {
            let map = PotentialMap::DiagonalPowerLaw { exps: vec![3.0; m] };
            let r = Reaction::power_pair(1.0, 3.0, 3.0);
            let rep = system_certificate(&map, &r, 0.45, &bump(m, 3.0), &sampler(3000)).unwrap();
            for name in ["B_below_ab", "potential_identity", "a_dot_u_nonnegative", "a_u_semidefinite"] {
                let c = rep.checks.iter().find(|c| c.name == name).unwrap();
                assert!(c.pass, "m {m}: {}", rep.render());
            }
            // the exact sup (m₀+1)/(2m₀) = 2/3 exceeds any admissible κ
            let k = rep.checks.iter().find(|c| c.name == "kappa_condition").unwrap();
            assert!((k.residual + 0.45 - 2.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn scalar_kappa_matches_k_route() {
        // for m = 1: κ̂ = k̂²/2 with k̂² = sup a² / (a' A)
        let m0 = 2.0;
        let map = PotentialMap::DiagonalPowerLaw { exps: vec![m0] };
        let est = kappa_infimum(&map, &sampler(500).draw(1), 0.0).unwrap();
        let k2 = 1.0 / (m0 / (m0 + 1.0));
        assert!((est.kappa - k2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn restricted_box_is_conditional() {
        let map = PotentialMap::DiagonalPowerLaw { exps: vec![2.0] };
        let r = Reaction::power_pair(1.0, 2.0, 2.0);
        let s = Sampler { exclude_radius: 0.1, ..sampler(100) };
        let rep = system_certificate(&map, &r, 0.4, &bump(1, 1.0), &s).unwrap();
        assert!(rep.conditional);
        assert!(rep.render().contains("conditional"));
    }
}
