use rayon::prelude::*;

use super::{Bc, FieldSet, Grid, VectorField};
use crate::error::{Error, Result};
use crate::PAR_MIN;

/// How a pointwise diffusion tensor is laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorLayout {
    /// `m × m` matrix acting on the component index, same in every direction.
    ComponentMatrix,
    /// `(m·dim) × (m·dim)` matrix on pairs (component, direction); row `(i, α)`
    /// sits at `i * dim + α`.
    FullTensor,
}

impl TensorLayout {
    pub fn len(self, m: usize, dim: usize) -> usize {
        match self {
            TensorLayout::ComponentMatrix => m * m,
            TensorLayout::FullTensor => (m * dim) * (m * dim),
        }
    }
}

#[derive(Clone, Copy)]
enum Ghost {
    Mirror(f64),
    Affine(f64),
    Wrap(f64),
}

fn state_rule(bc: Bc) -> Ghost {
    match bc {
        Bc::DirichletZero => Ghost::Mirror(-1.0),
        Bc::NeumannZero => Ghost::Mirror(1.0),
        Bc::Periodic => Ghost::Wrap(1.0),
        Bc::Antiperiodic => Ghost::Wrap(-1.0),
        Bc::DirichletValue(g) => Ghost::Affine(g),
    }
}

// Ghost parity of a flux is the dual of the field's, which makes the centered
// divergence the exact negative adjoint of the centered gradient.
fn flux_rule(bc: Bc) -> Ghost {
    match bc {
        Bc::DirichletZero | Bc::DirichletValue(_) => Ghost::Mirror(1.0),
        Bc::NeumannZero => Ghost::Mirror(-1.0),
        Bc::Periodic => Ghost::Wrap(1.0),
        Bc::Antiperiodic => Ghost::Wrap(-1.0),
    }
}

/// Cell values plus one ghost layer on every axis (corners included).
#[derive(Clone, Debug)]
pub struct Padded {
    grid: Grid,
    m: usize,
    pdims: Vec<usize>,
    pstrides: Vec<usize>,
    values: Vec<f64>,
    exact: bool,
}

impl Padded {
    fn empty(grid: &Grid, m: usize) -> Padded {
        let dim = grid.dim();
        let pdims: Vec<usize> = grid.cells().iter().map(|n| n + 2).collect();
        let mut pstrides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            pstrides[a] = pstrides[a + 1] * pdims[a + 1];
        }
        let total: usize = pdims.iter().product();
        Padded {
            grid: grid.clone(),
            m,
            pdims,
            pstrides,
            values: vec![0.0; m * total],
            exact: false,
        }
    }

    fn from_components(grid: &Grid, m: usize, src: &[f64], rule: fn(Bc) -> Ghost) -> Padded {
        let mut p = Padded::empty(grid, m);
        let n = grid.n_cells();
        let np = p.n_padded();
        for cell in 0..n {
            let pi = p.interior_index(cell);
            for c in 0..m {
                p.values[c * np + pi] = src[c * n + cell];
            }
        }
        p.fill_ghosts(rule);
        p
    }

    /// Pads a state with ghosts realizing its boundary conditions.
    pub fn new(field: &FieldSet) -> Padded {
        Padded::from_components(field.grid(), field.m(), field.values(), state_rule)
    }

    /// Pads with ghosts taken from a known solution at the ghost centers.
    pub fn from_exact(grid: &Grid, m: usize, f: impl Fn(&[f64; 3], &mut [f64])) -> Padded {
        let mut p = Padded::empty(grid, m);
        let np = p.n_padded();
        let mut buf = vec![0.0; m];
        for pi in 0..np {
            let x = p.padded_center(pi);
            f(&x, &mut buf);
            for c in 0..m {
                p.values[c * np + pi] = buf[c];
            }
        }
        p.exact = true;
        p
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n_padded(&self) -> usize {
        self.pdims.iter().product()
    }
    pub fn pstrides(&self) -> &[usize] {
        &self.pstrides
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Padded index of an interior cell.
    pub fn interior_index(&self, cell: usize) -> usize {
        let ijk = self.grid.unravel(cell);
        (0..self.grid.dim())
            .map(|a| (ijk[a] + 1) * self.pstrides[a])
            .sum()
    }

    pub fn get(&self, c: usize, pi: usize) -> f64 {
        self.values[c * self.n_padded() + pi]
    }

    fn unravel_padded(&self, mut pi: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in 0..self.grid.dim() {
            out[a] = pi / self.pstrides[a];
            pi %= self.pstrides[a];
        }
        out
    }

    fn padded_center(&self, pi: usize) -> [f64; 3] {
        let ijk = self.unravel_padded(pi);
        let mut x = [0.0; 3];
        for a in 0..self.grid.dim() {
            x[a] = self.grid.coord(a, ijk[a] as isize - 1);
        }
        x
    }

    pub fn state_at(&self, pi: usize, out: &mut [f64]) {
        let np = self.n_padded();
        for c in 0..self.m {
            out[c] = self.values[c * np + pi];
        }
    }

    fn fill_ghosts(&mut self, rule: fn(Bc) -> Ghost) {
        let dim = self.grid.dim();
        let np = self.n_padded();
        for a in 0..dim {
            let n = self.grid.cells()[a];
            let s = self.pstrides[a];
            let [lo, hi] = self.grid.bcs()[a];
            for pi in 0..np {
                let ia = (pi / s) % self.pdims[a];
                let (src, r) = if ia == 0 {
                    match rule(lo) {
                        Ghost::Wrap(_) => (pi + n * s, rule(lo)),
                        _ => (pi + s, rule(lo)),
                    }
                } else if ia == n + 1 {
                    match rule(hi) {
                        Ghost::Wrap(_) => (pi - n * s, rule(hi)),
                        _ => (pi - s, rule(hi)),
                    }
                } else {
                    continue;
                };
                for c in 0..self.m {
                    let v = self.values[c * np + src];
                    self.values[c * np + pi] = match r {
                        Ghost::Mirror(sign) | Ghost::Wrap(sign) => sign * v,
                        Ghost::Affine(g) => 2.0 * g - v,
                    };
                }
            }
        }
    }
}

fn check_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::Shape("fields live on different grids".into()));
    }
    Ok(())
}

/// Centered-difference gradient of every component.
pub fn gradient(grid: &Grid, field: &FieldSet) -> Result<VectorField> {
    check_grid(grid, field.grid())?;
    Ok(gradient_padded(&Padded::new(field)))
}

/// Centered-difference gradient reading boundary data from a padded array.
pub fn gradient_padded(p: &Padded) -> VectorField {
    let grid = p.grid();
    let dim = grid.dim();
    let n = grid.n_cells();
    let np = p.n_padded();
    let mut out = VectorField::zeros(grid, p.m());
    for c in 0..p.m() {
        let pv = &p.values[c * np..(c + 1) * np];
        for a in 0..dim {
            let s = p.pstrides[a];
            let inv = 0.5 / grid.spacing()[a];
            let slot = out.slot_mut(c, a);
            for cell in 0..n {
                let pi = p.interior_index(cell);
                slot[cell] = (pv[pi + s] - pv[pi - s]) * inv;
            }
        }
    }
    out
}

/// Centered divergence of a cell-centered flux.
///
/// The flux's normal component is extended with the parity dual to the
/// grid's boundary conditions, so
/// `Σ div(F)·g = −Σ F·gradient(g)` holds exactly for fields `g` obeying them.
pub fn divergence(grid: &Grid, flux: &VectorField) -> Result<FieldSet> {
    check_grid(grid, flux.grid())?;
    let dim = grid.dim();
    let m = flux.m();
    let n = grid.n_cells();
    let p = Padded::from_components(grid, m * dim, flux.values(), flux_rule);
    let np = p.n_padded();
    let mut out = FieldSet::zeros(grid, m);
    for c in 0..m {
        let dst = out.component_mut(c);
        for a in 0..dim {
            let pv = &p.values[(c * dim + a) * np..(c * dim + a + 1) * np];
            let s = p.pstrides[a];
            let inv = 0.5 / grid.spacing()[a];
            for cell in 0..n {
                let pi = p.interior_index(cell);
                dst[cell] += (pv[pi + s] - pv[pi - s]) * inv;
            }
        }
    }
    Ok(out)
}

/// Compact face-flux discretization of `Div(A(W) DW)`.
///
/// `tensor(w, out)` writes the pointwise tensor in the given layout. Face
/// tensors are the arithmetic mean of the two adjacent cell tensors (ghost
/// cells use the ghost state). Normal derivatives use the two adjacent cells;
/// tangential derivatives average the centered differences of both cells.
/// Faces on a `NeumannZero` boundary carry zero flux unless the padding came
/// from an exact solution.
pub fn divergence_form<F>(p: &Padded, layout: TensorLayout, tensor: F) -> FieldSet
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let grid = p.grid();
    let dim = grid.dim();
    let m = p.m();
    let n = grid.n_cells();
    let np = p.n_padded();
    let tl = layout.len(m, dim);

    let cached: Vec<f64> = if layout == TensorLayout::ComponentMatrix {
        let mut buf = vec![0.0; np * tl];
        buf.par_chunks_mut(tl)
            .with_min_len(PAR_MIN)
            .enumerate()
            .for_each_init(
                || vec![0.0; m],
                |w, (pi, out)| {
                    p.state_at(pi, w);
                    tensor(w, out);
                },
            );
        buf
    } else {
        Vec::new()
    };

    // face flux (m values) between padded cells `l` and `l + s_a`
    let face_flux = |l: usize, a: usize, ta: &mut [f64], tb: &mut [f64], w: &mut [f64], dw: &mut [f64], out: &mut [f64]| {
        let r = l + p.pstrides[a];
        let ha = grid.spacing()[a];
        match layout {
            TensorLayout::ComponentMatrix => {
                let al = &cached[l * tl..(l + 1) * tl];
                let ar = &cached[r * tl..(r + 1) * tl];
                for j in 0..m {
                    dw[j] = (p.get(j, r) - p.get(j, l)) / ha;
                }
                for i in 0..m {
                    let mut f = 0.0;
                    for j in 0..m {
                        f += 0.5 * (al[i * m + j] + ar[i * m + j]) * dw[j];
                    }
                    out[i] = f;
                }
            }
            TensorLayout::FullTensor => {
                p.state_at(l, w);
                tensor(w, ta);
                p.state_at(r, w);
                tensor(w, tb);
                for j in 0..m {
                    for b in 0..dim {
                        dw[j * dim + b] = if b == a {
                            (p.get(j, r) - p.get(j, l)) / ha
                        } else {
                            let sb = p.pstrides[b];
                            (p.get(j, l + sb) - p.get(j, l - sb) + p.get(j, r + sb)
                                - p.get(j, r - sb))
                                / (4.0 * grid.spacing()[b])
                        };
                    }
                }
                let md = m * dim;
                for i in 0..m {
                    let row = i * dim + a;
                    let mut f = 0.0;
                    for col in 0..md {
                        f += 0.5 * (ta[row * md + col] + tb[row * md + col]) * dw[col];
                    }
                    out[i] = f;
                }
            }
        }
    };

    let mut cellmajor = vec![0.0; n * m];
    cellmajor
        .par_chunks_mut(m)
        .with_min_len(PAR_MIN)
        .enumerate()
        .for_each_init(
            || {
                (
                    vec![0.0; tl],
                    vec![0.0; tl],
                    vec![0.0; m],
                    vec![0.0; m * dim],
                    vec![0.0; m],
                    vec![0.0; m],
                )
            },
            |(ta, tb, w, dw, fp, fm), (cell, acc)| {
            let ijk = grid.unravel(cell);
            let pi = p.interior_index(cell);
            for a in 0..dim {
                let s = p.pstrides[a];
                let na = grid.cells()[a];
                let [lo, hi] = grid.bcs()[a];
                face_flux(pi, a, ta, tb, w, dw, fp);
                face_flux(pi - s, a, ta, tb, w, dw, fm);
                if !p.exact {
                    if ijk[a] + 1 == na && hi == Bc::NeumannZero {
                        fp.iter_mut().for_each(|v| *v = 0.0);
                    }
                    if ijk[a] == 0 && lo == Bc::NeumannZero {
                        fm.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                let inv = 1.0 / grid.spacing()[a];
                for i in 0..m {
                    acc[i] += (fp[i] - fm[i]) * inv;
                }
            }
        },
        );

    let mut out = FieldSet::zeros(grid, m);
    for cell in 0..n {
        for c in 0..m {
            out.values_mut()[c * n + cell] = cellmajor[cell * m + c];
        }
    }
    out
}

/// Midpoint rule: Σ value · cell volume, summed in cell order.
pub fn integrate(grid: &Grid, values: &[f64]) -> f64 {
    values.iter().sum::<f64>() * grid.cell_volume()
}

/// Midpoint integral of every component.
pub fn integrate_components(field: &FieldSet) -> Vec<f64> {
    (0..field.m())
        .map(|c| integrate(field.grid(), field.component(c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_square(n: usize, bc: Bc) -> Grid {
        Grid::boxed(&[1.0, 1.0], &[n, n], bc).unwrap()
    }

    #[test]
    fn gradient_of_linear_field_is_exact_in_interior() {
        let g = unit_square(8, Bc::NeumannZero);
        let f = FieldSet::scalar(&g, |x| x[0]);
        let df = gradient(&g, &f).unwrap();
        for cell in 0..g.n_cells() {
            let ijk = g.unravel(cell);
            if ijk[0] == 0 || ijk[0] == 7 {
                continue;
            }
            assert!((df.get(0, 0, cell) - 1.0).abs() < 1e-13);
            assert!(df.get(0, 1, cell).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = unit_square(6, Bc::NeumannZero);
        let f = FieldSet::scalar(&g, |_| 3.5);
        let df = gradient(&g, &f).unwrap();
        assert!(df.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn periodic_gradient_converges_second_order() {
        let err = |n: usize| {
            let g = Grid::new(&[0.0], &[1.0], &[n], &[[Bc::Periodic, Bc::Periodic]]).unwrap();
            let f = FieldSet::scalar(&g, |x| (2.0 * PI * x[0]).sin());
            let df = gradient(&g, &f).unwrap();
            (0..n)
                .map(|i| (df.get(0, 0, i) - 2.0 * PI * (2.0 * PI * g.center(i)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(32) / err(64)).log2();
        assert!(order > 1.95, "order {order}");
    }

    #[test]
    fn divergence_of_gradient_of_quadratic_is_two() {
        let g = unit_square(12, Bc::NeumannZero);
        let f = FieldSet::scalar(&g, |x| x[0] * x[0]);
        let df = gradient(&g, &f).unwrap();
        let lap = divergence(&g, &df).unwrap();
        for cell in 0..g.n_cells() {
            let i = g.unravel(cell)[0];
            if (2..10).contains(&i) {
                assert!((lap.get(0, cell) - 2.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn summation_by_parts_is_exact_for_dirichlet_fields() {
        let g = unit_square(16, Bc::DirichletZero);
        let f = FieldSet::scalar(&g, |x| (PI * x[0]).sin() * x[1] * (1.0 - x[1]) + 0.3 * x[0]);
        let h = FieldSet::scalar(&g, |x| (x[0] * 3.0).cos() * (PI * x[1]).sin());
        let flux = gradient(&g, &f).unwrap();
        let div = divergence(&g, &flux).unwrap();
        let dh = gradient(&g, &h).unwrap();
        let lhs: f64 = div.values().iter().zip(h.values()).map(|(a, b)| a * b).sum();
        let rhs: f64 = flux.values().iter().zip(dh.values()).map(|(a, b)| a * b).sum();
        assert!((lhs + rhs).abs() < 1e-10 * (lhs.abs() + 1.0));
    }

    #[test]
    fn ghost_rules_per_condition() {
        let mk = |bc: [Bc; 2]| {
            let g = Grid::new(&[0.0], &[1.0], &[4], &[bc]).unwrap();
            let f = FieldSet::from_values(&g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
            let p = Padded::new(&f);
            (p.get(0, 0), p.get(0, 5))
        };
        assert_eq!(mk([Bc::DirichletZero; 2]), (-1.0, -4.0));
        assert_eq!(mk([Bc::NeumannZero; 2]), (1.0, 4.0));
        assert_eq!(mk([Bc::Periodic; 2]), (4.0, 1.0));
        assert_eq!(mk([Bc::Antiperiodic; 2]), (-4.0, -1.0));
        assert_eq!(mk([Bc::DirichletValue(1.0); 2]), (1.0, -2.0));
    }

    #[test]
    fn corner_ghosts_are_consistent() {
        let g = unit_square(3, Bc::DirichletZero);
        let f = FieldSet::scalar(&g, |x| x[0] + 2.0 * x[1]);
        let p = Padded::new(&f);
        // corner (-1,-1) mirrors (0,0) across both axes
        assert_eq!(p.get(0, 0), f.get(0, 0));
    }

    #[test]
    fn divergence_form_matches_laplacian_for_identity() {
        let g = unit_square(10, Bc::DirichletZero);
        let f = FieldSet::scalar(&g, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let p = Padded::new(&f);
        let lap = divergence_form(&p, TensorLayout::ComponentMatrix, |_, a| a[0] = 1.0);
        let full = divergence_form(&p, TensorLayout::FullTensor, |_, a| {
            a.iter_mut().for_each(|v| *v = 0.0);
            a[0] = 1.0;
            a[3] = 1.0;
        });
        let h = 0.1;
        for cell in 0..g.n_cells() {
            let ijk = g.unravel(cell);
            let pi = p.interior_index(cell);
            let s = p.pstrides();
            let v = p.get(0, pi);
            let five = (p.get(0, pi + s[0]) + p.get(0, pi - s[0]) + p.get(0, pi + s[1])
                + p.get(0, pi - s[1])
                - 4.0 * v)
                / (h * h);
            assert!((lap.get(0, cell) - five).abs() < 1e-10, "{ijk:?}");
            assert!((full.get(0, cell) - five).abs() < 1e-10);
        }
    }

    #[test]
    fn neumann_divergence_form_conserves_mass() {
        let g = unit_square(9, Bc::NeumannZero);
        let f = FieldSet::from_fn(&g, 2, |x, w| {
            w[0] = 1.0 + x[0] * x[1];
            w[1] = (3.0 * x[0]).cos();
        });
        let p = Padded::new(&f);
        let div = divergence_form(&p, TensorLayout::ComponentMatrix, |w, a| {
            a[0] = 1.0 + w[0] * w[0];
            a[1] = 0.3 * w[0];
            a[2] = 0.1;
            a[3] = 2.0 + w[1].abs();
        });
        for s in integrate_components(&div) {
            assert!(s.abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn midpoint_integrals() {
        let g = unit_square(7, Bc::NeumannZero);
        assert!((integrate(&g, &vec![1.0; 49]) - 1.0).abs() < 1e-14);
        let line = Grid::boxed(&[1.0], &[1000], Bc::NeumannZero).unwrap();
        let f = FieldSet::scalar(&line, |x| x[0]);
        assert!((integrate(&line, f.values()) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn midpoint_sine_integral_second_order() {
        let err = |n: usize| {
            let line = Grid::boxed(&[1.0], &[n], Bc::DirichletZero).unwrap();
            let f = FieldSet::scalar(&line, |x| (PI * x[0]).sin());
            (integrate(&line, f.values()) - 2.0 / PI).abs()
        };
        assert!((err(50) / err(100)).log2() > 1.95);
    }
}
