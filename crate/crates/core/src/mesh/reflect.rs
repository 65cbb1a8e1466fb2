use super::{Bc, FieldSet};
use crate::error::{Error, Result};

/// Symmetry used when extending a field across the upper face of an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// Mirrored values; pairs with Neumann data.
    Even,
    /// Sign-flipped mirror; pairs with Dirichlet data.
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

fn flip(bc: Bc, parity: Parity) -> Bc {
    match (bc, parity) {
        (Bc::DirichletValue(g), Parity::Odd) => Bc::DirichletValue(-g),
        (b, _) => b,
    }
}

/// Extends a field across the upper face of `axis`, doubling that axis.
///
/// Cell `n + k` receives `±f(n − 1 − k)`. The new upper end carries the
/// reflected lower condition.
pub fn reflect(field: &FieldSet, axis: usize, parity: Parity) -> Result<FieldSet> {
    let g = field.grid();
    if axis >= g.dim() {
        return Err(Error::Precondition(format!(
            "axis {axis} out of range for a {}-d grid",
            g.dim()
        )));
    }
    let n = g.cells()[axis];
    let lo = g.bcs()[axis][0];
    let big = g.with_axis(axis, 2.0 * g.extent()[axis], 2 * n, [lo, flip(lo, parity)]);
    let sign = parity.sign();
    let nb = big.n_cells();
    let mut values = vec![0.0; field.m() * nb];
    for cell in 0..nb {
        let mut ijk = big.unravel(cell);
        let i = ijk[axis];
        let s = if i < n {
            1.0
        } else {
            ijk[axis] = 2 * n - 1 - i;
            sign
        };
        let src = g.ravel(ijk);
        for c in 0..field.m() {
            values[c * nb + cell] = s * field.get(c, src);
        }
    }
    let mut out = FieldSet::from_values(&big, field.m(), values)?;
    out.time = field.time;
    Ok(out)
}

/// Keeps the first `cells` cells along `axis`, with `bc` on that axis.
pub fn restrict(field: &FieldSet, axis: usize, cells: usize, bc: [Bc; 2]) -> Result<FieldSet> {
    let g = field.grid();
    if axis >= g.dim() || cells < 2 || cells > g.cells()[axis] {
        return Err(Error::Precondition(format!(
            "cannot restrict axis {axis} to {cells} cells"
        )));
    }
    let ext = g.spacing()[axis] * cells as f64;
    let small = g.with_axis(axis, ext, cells, bc);
    let ns = small.n_cells();
    let mut values = vec![0.0; field.m() * ns];
    for cell in 0..ns {
        let src = g.ravel(small.unravel(cell));
        for c in 0..field.m() {
            values[c * ns + cell] = field.get(c, src);
        }
    }
    let mut out = FieldSet::from_values(&small, field.m(), values)?;
    out.time = field.time;
    Ok(out)
}

/// Largest mismatch `|f(n + k) ∓ f(n − 1 − k)|` about the midplane of `axis`.
pub fn seam_residual(field: &FieldSet, axis: usize, parity: Parity) -> f64 {
    let g = field.grid();
    let total = g.cells()[axis];
    let n = total / 2;
    let sign = parity.sign();
    let mut worst = 0.0f64;
    for cell in 0..g.n_cells() {
        let mut ijk = g.unravel(cell);
        let i = ijk[axis];
        if i < n {
            continue;
        }
        ijk[axis] = total - 1 - i;
        let mirror = g.ravel(ijk);
        for c in 0..field.m() {
            worst = worst.max((field.get(c, cell) - sign * field.get(c, mirror)).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;

    #[test]
    fn odd_reflection_of_linear_profile() {
        let delta = 0.05;
        let g = Grid::boxed(&[1.0, delta], &[4, 8], Bc::DirichletZero).unwrap();
        let f = FieldSet::scalar(&g, |x| x[1]);
        let r = reflect(&f, 1, Parity::Odd).unwrap();
        assert_eq!(r.grid().cells(), &[4, 16]);
        for cell in 0..r.n_cells() {
            let ijk = r.grid().unravel(cell);
            if ijk[1] >= 8 {
                let s = r.grid().center(cell)[1] - delta;
                assert!((r.get(0, cell) + (delta - s)).abs() < 1e-15);
            }
        }
        assert_eq!(seam_residual(&r, 1, Parity::Odd), 0.0);
    }

    #[test]
    fn even_reflection_of_constant() {
        let g = Grid::boxed(&[1.0], &[5], Bc::NeumannZero).unwrap();
        let f = FieldSet::scalar(&g, |_| 1.0);
        let r = reflect(&f, 0, Parity::Even).unwrap();
        assert!(r.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn restrict_undoes_reflect() {
        let g = Grid::boxed(&[1.0, 0.3], &[3, 5], Bc::NeumannZero).unwrap();
        let f = FieldSet::scalar(&g, |x| x[0] * 7.0 - x[1].sin());
        let r = reflect(&f, 1, Parity::Even).unwrap();
        let back = restrict(&r, 1, 5, [Bc::NeumannZero; 2]).unwrap();
        assert_eq!(back, f);
    }
}
