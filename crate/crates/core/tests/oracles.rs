//! Checks against independent references: closed-form heat solutions and a
//! dense symmetric eigen-solve.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crossdiff_core::dynamics::{run, step, RunOptions, RunState};
use crossdiff_core::functionals::{apply_operator, principal_eigenpair, Normalization};
use crossdiff_core::mesh::{Bc, FieldSet, Grid};
use crossdiff_core::models::{Diffusion, ModelSpec, Reaction};

fn heat() -> ModelSpec {
    ModelSpec::new(Diffusion::Constant { m: 1, matrix: vec![1.0] }, Reaction::None).unwrap()
}

fn heat_exact(x: f64, t: f64) -> f64 {
    (-PI * PI * t).exp() * (PI * x).sin()
}

fn l2_error(f: &FieldSet, t: f64) -> f64 {
    let g = f.grid();
    let h = g.spacing()[0];
    let sq: f64 = (0..g.n_cells())
        .map(|i| (f.get(0, i) - heat_exact(g.center(i)[0], t)).powi(2))
        .sum();
    (sq * h).sqrt()
}

fn order(errs: &[f64]) -> f64 {
    let n = errs.len();
    (errs[n - 2] / errs[n - 1]).log2()
}

#[test]
fn heat_spatial_order_is_two() {
    let t_end = 0.1;
    let errs: Vec<f64> = [16, 32, 64, 128]
        .iter()
        .map(|&n| {
            let g = Grid::boxed(&[1.0], &[n], Bc::DirichletZero).unwrap();
            let u0 = FieldSet::scalar(&g, |x| heat_exact(x[0], 0.0));
            let report = run(&heat(), u0, t_end, &RunOptions::default()).unwrap();
            assert!((report.state.time - t_end).abs() < 1e-12);
            l2_error(&report.state.field, report.state.time)
        })
        .collect();
    let p = order(&errs);
    assert!(p >= 1.8, "spatial order {p:.3}, errors {errs:?}");
}

#[test]
fn heat_temporal_order_is_one() {
    let g = Grid::boxed(&[1.0], &[64], Bc::DirichletZero).unwrap();
    let u0 = FieldSet::scalar(&g, |x| heat_exact(x[0], 0.0));
    let t_end = 0.1;
    let march = |dt: f64| {
        let steps = (t_end / dt).round() as usize;
        let mut s = RunState::new(u0.clone());
        for _ in 0..steps {
            s = step(&s, &heat(), dt).unwrap();
        }
        s.field
    };
    // same grid, so the spatial error cancels
    let reference = march(2.5e-6);
    let errs: Vec<f64> = [4e-5, 2e-5, 1e-5]
        .iter()
        .map(|&dt| {
            let f = march(dt);
            let sq: f64 = f.values().iter().zip(reference.values()).map(|(a, b)| (a - b).powi(2)).sum();
            (sq * g.spacing()[0]).sqrt()
        })
        .collect();
    let p = order(&errs);
    assert!(p >= 0.9, "temporal order {p:.3}, errors {errs:?}");
}

fn dense_operator(g: &Grid, gamma: &[f64]) -> DMatrix<f64> {
    let n = g.n_cells();
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply_operator(g, gamma, &e);
        for i in 0..n {
            a[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    a
}

#[test]
fn principal_eigenvalue_matches_dense_solve() {
    let cases = [
        Grid::boxed(&[1.0], &[80], Bc::DirichletZero).unwrap(),
        Grid::boxed(&[1.0, 2.0], &[12, 16], Bc::DirichletZero).unwrap(),
    ];
    for g in cases {
        let gamma: Vec<f64> = (0..g.n_cells())
            .map(|i| {
                let x = g.center(i);
                1.0 + 0.5 * x[0] + (2.0 * x[1]).cos().powi(2)
            })
            .collect();
        let a = dense_operator(&g, &gamma);
        assert!((&a - a.transpose()).amax() < 1e-9);
        let eig = SymmetricEigen::new(a);
        let (k, lambda) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        let pair = principal_eigenpair(&g, &gamma, Normalization::L1).unwrap();
        assert!((pair.eigenvalue - lambda).abs() <= 1e-8 * lambda, "{} vs {lambda}", pair.eigenvalue);

        // compare shapes after L¹ normalization
        let v = eig.eigenvectors.column(k);
        let s: f64 = v.iter().sum();
        let mass: f64 = v.iter().map(|x| (x / s).abs()).sum::<f64>() * g.cell_volume();
        let phi = pair.eigenfunction.component(0);
        let worst = phi
            .iter()
            .zip(v.iter())
            .map(|(p, q)| (p - q / s / mass).abs())
            .fold(0.0, f64::max);
        let scale = phi.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        assert!(worst <= 1e-6 * scale, "eigenvector gap {worst:e}");
    }
}

#[test]
fn constant_coefficient_eigenvalue_matches_closed_form() {
    let n = 200;
    let g = Grid::boxed(&[1.0], &[n], Bc::DirichletZero).unwrap();
    let pair = principal_eigenpair(&g, &vec![1.0; n], Normalization::L1).unwrap();
    assert!((pair.eigenvalue - PI * PI).abs() / (PI * PI) < 1e-4, "{}", pair.eigenvalue);
}
