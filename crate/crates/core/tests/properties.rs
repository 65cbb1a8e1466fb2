use std::f64::consts::PI;

use proptest::prelude::*;

use crossdiff_core::certificates::{blowup_horizon, kappa_infimum, Sampler};
use crossdiff_core::dynamics::{run, step, RunOptions, RunState};
use crossdiff_core::exact::{affine_solution, evolution_residual, js_state, js_sup_gradient};
use crossdiff_core::functionals::{
    apply_operator, bmo_seminorm, levine_phi, lp_norm, principal_eigenpair, slab_criterion, Normalization,
};
use crossdiff_core::mesh::{
    divergence, gradient, integrate, reflect, restrict, seam_residual, Bc, FieldSet, Grid, Parity, VectorField,
};
use crossdiff_core::models::{
    ellipticity_estimate, eval_diffusion, Diffusion, ModelSpec, Poly, PotentialMap, Reaction, Weight,
};

fn square(n: usize, bc: Bc) -> Grid {
    Grid::boxed(&[1.0, 1.0], &[n, n], bc).unwrap()
}

/// A few smooth modes with the given coefficients.
fn trig(coef: &[f64]) -> impl Fn(&[f64; 3]) -> f64 + '_ {
    move |x| {
        coef.iter()
            .enumerate()
            .map(|(j, c)| c * (PI * (j + 1) as f64 * x[0]).cos() * (PI * (j % 2 + 1) as f64 * x[1] + 0.3 * j as f64).sin())
            .sum()
    }
}

fn coefs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn summation_by_parts_holds_for_dirichlet_fields(a in coefs(3), b in coefs(3), c in coefs(3)) {
        let g = square(20, Bc::DirichletZero);
        let test = FieldSet::scalar(&g, |x| trig(&a)(x) * x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        let fx = FieldSet::scalar(&g, trig(&b));
        let fy = FieldSet::scalar(&g, trig(&c));
        let mut vals = fx.values().to_vec();
        vals.extend_from_slice(fy.values());
        let flux = VectorField::from_values(&g, 1, vals).unwrap();
        let div = divergence(&g, &flux).unwrap();
        let dg = gradient(&g, &test).unwrap();
        let lhs: Vec<f64> = div.values().iter().zip(test.values()).map(|(d, t)| d * t).collect();
        let rhs: Vec<f64> = (0..g.n_cells())
            .map(|i| flux.get(0, 0, i) * dg.get(0, 0, i) + flux.get(0, 1, i) * dg.get(0, 1, i))
            .collect();
        let gap = (integrate(&g, &lhs) + integrate(&g, &rhs)).abs();
        prop_assert!(gap <= 1e-12, "gap {gap:e}");
    }

    #[test]
    fn gradient_exact_on_affine_fields_in_the_interior(c0 in -5.0..5.0f64, c1 in -5.0..5.0f64, c2 in -5.0..5.0f64) {
        let g = square(12, Bc::NeumannZero);
        let f = FieldSet::scalar(&g, |x| c0 + c1 * x[0] + c2 * x[1]);
        let df = gradient(&g, &f).unwrap();
        for cell in 0..g.n_cells() {
            let [i, j, _] = g.unravel(cell);
            if i == 0 || j == 0 || i == 11 || j == 11 {
                continue;
            }
            prop_assert!((df.get(0, 0, cell) - c1).abs() < 1e-12);
            prop_assert!((df.get(0, 1, cell) - c2).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_exact_on_quadratic_fluxes_in_the_interior(q in coefs(6)) {
        let g = square(12, Bc::NeumannZero);
        let fx = |x: &[f64; 3]| q[0] * x[0] * x[0] + q[1] * x[0] * x[1] + q[2] * x[1];
        let fy = |x: &[f64; 3]| q[3] * x[1] * x[1] + q[4] * x[0] * x[1] + q[5] * x[0];
        let mut vals = FieldSet::scalar(&g, fx).into_values();
        vals.extend(FieldSet::scalar(&g, fy).into_values());
        let div = divergence(&g, &VectorField::from_values(&g, 1, vals).unwrap()).unwrap();
        for cell in 0..g.n_cells() {
            let [i, j, _] = g.unravel(cell);
            if i == 0 || j == 0 || i == 11 || j == 11 {
                continue;
            }
            let x = g.center(cell);
            let exact = 2.0 * q[0] * x[0] + q[1] * x[1] + 2.0 * q[3] * x[1] + q[4] * x[0];
            prop_assert!((div.get(0, cell) - exact).abs() < 1e-11);
        }
    }

    #[test]
    fn reflect_then_restrict_is_the_identity(vals in prop::collection::vec(-10.0..10.0f64, 6 * 5 * 2), axis in 0usize..2, odd in any::<bool>()) {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 0.5], &[6, 5], &[[Bc::DirichletZero; 2], [Bc::NeumannZero; 2]]).unwrap();
        let f = FieldSet::from_values(&g, 2, vals).unwrap();
        let parity = if odd { Parity::Odd } else { Parity::Even };
        let big = reflect(&f, axis, parity).unwrap();
        prop_assert_eq!(seam_residual(&big, axis, parity), 0.0);
        let back = restrict(&big, axis, g.cells()[axis], g.bcs()[axis]).unwrap();
        prop_assert_eq!(back.grid(), f.grid());
        prop_assert_eq!(back.values(), f.values());
    }

    #[test]
    fn integrate_is_linear_and_monotone(a in prop::collection::vec(-3.0..3.0f64, 64), d in prop::collection::vec(0.0..3.0f64, 64), s in -4.0..4.0f64) {
        let g = Grid::boxed(&[2.0], &[64], Bc::NeumannZero).unwrap();
        let b: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + y).collect();
        prop_assert!(integrate(&g, &a) <= integrate(&g, &b) + 1e-12);
        let comb: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + y).collect();
        let lin = s * integrate(&g, &a) + integrate(&g, &b);
        prop_assert!((integrate(&g, &comb) - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
    }
}

// ------------------------------------------------------------------ models

fn fd_jacobian(map: &PotentialMap, u: &[f64]) -> Vec<f64> {
    let m = map.m();
    let mut out = vec![0.0; m * m];
    let (mut ap, mut am) = (vec![0.0; m], vec![0.0; m]);
    for j in 0..m {
        let h = 1e-6 * (1.0 + u[j].abs());
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[j] += h;
        um[j] -= h;
        map.eval(&up, &mut ap);
        map.eval(&um, &mut am);
        for i in 0..m {
            out[i * m + j] = (ap[i] - am[i]) / (2.0 * h);
        }
    }
    out
}

fn potential_families() -> Vec<Diffusion> {
    vec![
        Diffusion::Constant { m: 2, matrix: vec![2.0, 0.5, 0.1, 1.0] },
        Diffusion::Skt { d: vec![1.0, 2.0], alpha: vec![0.3, 0.2, 0.1, 0.4] },
        Diffusion::DiagonalPowerLaw { exps: vec![2.0, 3.0] },
        Diffusion::DiagonalSeparate { exps: vec![2.5, 3.0] },
        Diffusion::KShifted { m: 2, k_shift: 0.5, m0: 3.0 },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensors_match_finite_differences_of_the_potential(u in prop::collection::vec(0.2..4.0f64, 2), sign in prop::collection::vec(any::<bool>(), 2)) {
        let u: Vec<f64> = u.iter().zip(&sign).map(|(v, s)| if *s { -v } else { *v }).collect();
        for d in potential_families() {
            let model = ModelSpec::new(d, Reaction::None).unwrap();
            let map = model.potential().unwrap();
            let a = eval_diffusion(&model, &u, 2);
            let fd = fd_jacobian(&map, &u);
            for (x, y) in a.values.iter().zip(&fd) {
                prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "{} at {u:?}: {x} vs {y}", model.diffusion.name());
            }
        }
    }

    #[test]
    fn js_quadratic_form_dominates_theta(dir in prop::collection::vec(-1.0..1.0f64, 3), r in 0.0..0.99f64, xi in prop::collection::vec(-1.0..1.0f64, 9), theta in 0.01..0.7f64) {
        // the tensor is defined on the open unit ball
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        let u: Vec<f64> = dir.iter().map(|v| r * v / len).collect();
        let model = ModelSpec::new(Diffusion::JsTensor { kappa: 1.0, theta }, Reaction::None).unwrap();
        let a = eval_diffusion(&model, &u, 3);
        let x2: f64 = xi.iter().map(|v| v * v).sum();
        prop_assert!(a.quadratic_form(&xi) >= theta * x2 * (1.0 - 1e-12));
    }

    #[test]
    fn growth_families_are_elliptic_with_their_declared_k(seed in 0u64..1000) {
        let families = [
            Diffusion::Skt { d: vec![1.0, 1.0], alpha: vec![0.5, 0.1, 0.1, 0.5] },
            Diffusion::ScalarWeight { gamma: Weight::Power { c0: 1.0, c1: 1.0, p: 1.5 }, matrix: vec![1.0, 0.2, 0.2, 1.0] },
            Diffusion::FactoredRows {
                entries: vec![Poly(vec![1.0]), Poly(vec![0.1]), Poly(vec![0.1]), Poly(vec![1.0])],
                gamma: vec![Weight::Linear { c0: 1.0, c: vec![1.0, 1.0] }, Weight::Linear { c0: 1.0, c: vec![1.0, 1.0] }],
            },
        ];
        let samples: Vec<(Vec<f64>, Vec<f64>)> = crossdiff_core::models::random_samples(2, 4, 200, 1e3, seed)
            .into_iter()
            .map(|(w, xi)| (w.iter().map(|v| v.abs()).collect(), xi))
            .collect();
        for d in families {
            let model = ModelSpec::new(d, Reaction::None).unwrap();
            let e = ellipticity_estimate(&model, &samples, 2).unwrap();
            prop_assert!(e.elliptic, "{}: {}", model.diffusion.name(), e.estimate);
        }
    }

    #[test]
    fn triangular_last_row_sees_only_v(w in prop::collection::vec(-3.0..3.0f64, 3), shift in prop::collection::vec(-3.0..3.0f64, 2)) {
        let d = Diffusion::Triangular {
            exps: vec![2.0, 3.0],
            cross: vec![Poly(vec![0.0, 1.0]), Poly(vec![0.5, 0.0, 1.0])],
            dv: Poly(vec![1.0, 0.0, 0.3]),
        };
        let model = ModelSpec::new(d, Reaction::None).unwrap();
        let a = eval_diffusion(&model, &w, 1);
        let moved = [w[0] + shift[0], w[1] + shift[1], w[2]];
        let b = eval_diffusion(&model, &moved, 1);
        for c in 0..3 {
            prop_assert_eq!(a.entry(2, c), b.entry(2, c));
        }
        prop_assert_eq!(a.entry(2, 0), 0.0);
        prop_assert_eq!(a.entry(2, 1), 0.0);
    }
}

// ------------------------------------------------------------------ dynamics

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn neumann_runs_conserve_mass(a in coefs(3), b in coefs(3)) {
        let g = square(16, Bc::NeumannZero);
        let model = ModelSpec::new(Diffusion::Skt { d: vec![1.0, 0.5], alpha: vec![0.2, 0.1, 0.3, 0.1] }, Reaction::None).unwrap();
        let w0 = FieldSet::from_fn(&g, 2, |x, w| {
            w[0] = 3.0 + 0.3 * trig(&a)(x);
            w[1] = 3.0 + 0.3 * trig(&b)(x);
        });
        let m0 = [integrate(&g, w0.component(0)), integrate(&g, w0.component(1))];
        let report = run(&model, w0, 0.05, &RunOptions::default()).unwrap();
        for c in 0..2 {
            let m1 = integrate(&g, report.state.field.component(c));
            prop_assert!((m1 - m0[c]).abs() <= 1e-12 * 0.05 * m0[c].abs().max(1.0), "drift {:e}", m1 - m0[c]);
        }
    }

    #[test]
    fn mirror_symmetric_data_stays_symmetric(a in prop::collection::vec(0.0..1.0f64, 3)) {
        let n = 16;
        let g = square(n, Bc::DirichletZero);
        let model = ModelSpec::new(
            Diffusion::ScalarWeight { gamma: Weight::Power { c0: 1.0, c1: 1.0, p: 2.0 }, matrix: vec![1.0] },
            Reaction::PowerLaw { coef: 1.0, power: 1.0 },
        )
        .unwrap();
        // symmetric about x = 1/2
        let w0 = FieldSet::scalar(&g, |x| {
            let s = (PI * x[0]).sin();
            (a[0] * s + a[1] * s.powi(3)) * (PI * x[1]).sin() * (1.0 + a[2] * x[1])
        });
        let mut state = RunState::new(w0);
        for _ in 0..200 {
            state = step(&state, &model, 2e-4).unwrap();
        }
        let f = &state.field;
        let mut worst = 0.0f64;
        for cell in 0..g.n_cells() {
            let [i, j, _] = g.unravel(cell);
            let mirror = g.ravel([n - 1 - i, j, 0]);
            worst = worst.max((f.get(0, cell) - f.get(0, mirror)).abs());
        }
        prop_assert!(worst <= 1e-12, "asymmetry {worst:e}");
    }
}

// ------------------------------------------------------------------ functionals

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_norm_is_monotone_in_p_on_unit_domains(a in coefs(4), p in 1.0..4.0f64, dp in 0.0..4.0f64) {
        let g = square(12, Bc::NeumannZero);
        let f = FieldSet::scalar(&g, trig(&a));
        let lo = lp_norm(&f, p).unwrap();
        let hi = lp_norm(&f, p + dp).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12) + 1e-300);
        prop_assert!(hi <= lp_norm(&f, f64::INFINITY).unwrap() * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn bmo_ignores_constants_and_scales_linearly(a in coefs(3), shift in -10.0..10.0f64, s in -5.0..5.0f64) {
        let g = square(16, Bc::NeumannZero);
        let f = FieldSet::scalar(&g, trig(&a));
        let sizes = [0.25, 0.5];
        let base = bmo_seminorm(&f, &sizes).unwrap();
        let shifted = bmo_seminorm(&f.map(|v| v + shift), &sizes).unwrap();
        let scaled = bmo_seminorm(&f.map(|v| s * v), &sizes).unwrap();
        prop_assert!((shifted - base).abs() <= 1e-12 * (1.0 + base + shift.abs()));
        prop_assert!((scaled - s.abs() * base).abs() <= 1e-12 * (1.0 + s.abs() * base));
    }

    #[test]
    fn levine_phi_of_identity_is_half_l2_squared(a in coefs(3), b in coefs(3)) {
        let g = square(10, Bc::NeumannZero);
        let w = FieldSet::from_fn(&g, 2, |x, w| {
            w[0] = trig(&a)(x);
            w[1] = trig(&b)(x);
        });
        let map = PotentialMap::Linear { m: 2, matrix: vec![1.0, 0.0, 0.0, 1.0] };
        let phi = levine_phi(&w, &map).unwrap();
        let half = 0.5 * lp_norm(&w, 2.0).unwrap().powi(2);
        prop_assert!((phi - half).abs() <= 1e-10 * (1.0 + half));
    }

    #[test]
    fn slab_criterion_vanishes_exactly_for_planar_fields(a in coefs(3), bump in 0.0..1.0f64) {
        let g = Grid::new(&[0.0; 3], &[1.0, 1.0, 0.2], &[8, 8, 4], &[[Bc::DirichletZero; 2], [Bc::DirichletZero; 2], [Bc::NeumannZero; 2]]).unwrap();
        let planar = FieldSet::scalar(&g, trig(&a));
        prop_assert_eq!(slab_criterion(&planar, 0.2).unwrap(), 0.0);
        let tilted = FieldSet::scalar(&g, |x| trig(&a)(x) + (bump + 0.1) * (PI * x[2] / 0.2).cos());
        prop_assert!(slab_criterion(&tilted, 0.2).unwrap() > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn eigenpairs_are_positive_and_rayleigh_consistent(c in prop::collection::vec(0.0..2.0f64, 3)) {
        let n = 120;
        let g = Grid::boxed(&[1.0], &[n], Bc::DirichletZero).unwrap();
        let gamma: Vec<f64> = (0..n)
            .map(|i| {
                let x = g.center(i)[0];
                1.0 + c[0] * x + c[1] * (3.0 * x).sin().powi(2) + c[2] * x * x
            })
            .collect();
        let pair = principal_eigenpair(&g, &gamma, Normalization::L1).unwrap();
        let phi = pair.eigenfunction.component(0);
        prop_assert!(phi.iter().all(|v| *v > 0.0));
        let lphi = apply_operator(&g, &gamma, phi);
        let num: f64 = phi.iter().zip(&lphi).map(|(a, b)| a * b).sum();
        let den: f64 = phi.iter().map(|a| a * a).sum();
        prop_assert!(((num / den) - pair.eigenvalue).abs() <= 1e-8 * pair.eigenvalue);
    }
}

// ------------------------------------------------------------------ certificates

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn horizon_shrinks_as_psi_grows(phi in 0.01..100.0f64, psi in 0.01..100.0f64, dpsi in 0.001..10.0f64, c in 1.01..5.0f64) {
        let a = blowup_horizon(phi, psi, c).unwrap();
        let b = blowup_horizon(phi, psi + dpsi, c).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn kappa_is_invariant_under_amplitude_scaling(m0 in 1.2..6.0f64, seed in 0u64..500, decade in -3i32..4) {
        let map = PotentialMap::DiagonalPowerLaw { exps: vec![m0, m0, m0] };
        let sampler = Sampler { count: 300, seed, ..Sampler::default() };
        let pairs = sampler.draw(3);
        let s = 10f64.powi(decade);
        let scaled: Vec<(Vec<f64>, Vec<f64>)> = pairs
            .iter()
            .map(|(u, xi)| (u.iter().map(|v| v * s).collect(), xi.clone()))
            .collect();
        let a = kappa_infimum(&map, &pairs, 0.0).unwrap().kappa;
        let b = kappa_infimum(&map, &scaled, 0.0).unwrap().kappa;
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
}

// ------------------------------------------------------------------ exact

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn js_state_is_odd_and_radial(x in prop::collection::vec(-2.0..2.0f64, 3), t in 0.0..0.999f64, kappa in 0.1..3.0f64, rot in 0.0..(2.0 * PI)) {
        let p = [x[0], x[1], x[2]];
        let a = js_state(&p, t, kappa).unwrap();
        let b = js_state(&[-p[0], -p[1], -p[2]], t, kappa).unwrap();
        for i in 0..3 {
            prop_assert_eq!(a.u[i], -b.u[i]);
        }
        // u ∥ x
        let cross = [
            a.u[1] * p[2] - a.u[2] * p[1],
            a.u[2] * p[0] - a.u[0] * p[2],
            a.u[0] * p[1] - a.u[1] * p[0],
        ];
        prop_assert!(cross.iter().all(|c| c.abs() <= 1e-12));
        // |u| depends on |x| only: rotate about the x₃ axis
        let q = [p[0] * rot.cos() - p[1] * rot.sin(), p[0] * rot.sin() + p[1] * rot.cos(), p[2]];
        let c = js_state(&q, t, kappa).unwrap();
        let norm = |u: &[f64; 3]| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        prop_assert!((norm(&a.u) - norm(&c.u)).abs() <= 1e-12);
        prop_assert!(norm(&a.u) < 1.0);
    }

    #[test]
    fn affine_states_have_zero_residual(offset in coefs(2), slope in coefs(6)) {
        let g = Grid::boxed(&[1.0, 1.0, 1.0], &[6, 6, 6], Bc::NeumannZero).unwrap();
        let model = ModelSpec::new(Diffusion::Constant { m: 2, matrix: vec![1.0, 0.3, 0.2, 2.0] }, Reaction::None).unwrap();
        let sol = affine_solution(offset, slope).unwrap();
        let row = evolution_residual(&model, &sol, &g, 0.3).unwrap();
        prop_assert!(row.residual <= 1e-12, "{:e}", row.residual);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn js_gradient_grows_toward_the_singular_time(kappa in 0.2..3.0f64, first in 0.5..0.9f64) {
        let g = Grid::new(&[-0.1; 3], &[0.2; 3], &[5; 3], &[[Bc::NeumannZero; 2]; 3]).unwrap();
        let times: Vec<f64> = (0..5).map(|k| 1.0 - (1.0 - first) * 0.3f64.powi(k)).collect();
        let mut last = 0.0;
        for &t in &times {
            let d = js_sup_gradient(&g, t, kappa).unwrap();
            prop_assert!(d > last);
            last = d;
            for cell in 0..g.n_cells() {
                let u = js_state(&g.center(cell), t, kappa).unwrap().u;
                prop_assert!(u.iter().map(|v| v * v).sum::<f64>() <= 1.0);
            }
        }
    }
}
