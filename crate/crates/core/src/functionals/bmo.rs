use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{gradient, FieldSet, Grid};

fn anchors(n: usize, side: usize) -> Vec<usize> {
    let stride = (side / 2).max(1);
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|i| i + side <= n).collect();
    if out.last().map_or(true, |&l| l + side < n) {
        out.push(n - side);
    }
    out
}

fn cube_sides(grid: &Grid, size: f64) -> [usize; 3] {
    let mut sides = [1usize; 3];
    for a in 0..grid.dim() {
        let c = (size / grid.spacing()[a]).round() as usize;
        sides[a] = c.clamp(1, grid.cells()[a]);
    }
    sides
}

fn mean_oscillation(field: &FieldSet, lo: [usize; 3], sides: [usize; 3]) -> f64 {
    let g = field.grid();
    let m = field.m();
    let mut cells = Vec::with_capacity(sides.iter().product());
    for i in 0..sides[0] {
        for j in 0..sides[1] {
            for k in 0..sides[2] {
                let mut ijk = [lo[0] + i, lo[1] + j, lo[2] + k];
                for a in g.dim()..3 {
                    ijk[a] = 0;
                }
                cells.push(g.ravel(ijk));
            }
        }
    }
    let count = cells.len() as f64;
    // deviations are taken from the first cell so flat cubes give exactly 0
    let base: Vec<f64> = (0..m).map(|ci| field.get(ci, cells[0])).collect();
    let mut mean = vec![0.0; m];
    for &c in &cells {
        for (ci, mu) in mean.iter_mut().enumerate() {
            *mu += field.get(ci, c) - base[ci];
        }
    }
    mean.iter_mut().for_each(|v| *v /= count);
    let mut osc = 0.0;
    for &c in &cells {
        let d2: f64 = (0..m)
            .map(|ci| (field.get(ci, c) - base[ci] - mean[ci]).powi(2))
            .sum();
        osc += d2.sqrt();
    }
    osc / count
}

/// Largest mean oscillation `(1/|Q|)∫_Q |f − f_Q|` over grid-aligned cubes.
///
/// Each size is a cube side length, rounded to whole cells and clipped per
/// axis to the domain. Cubes are anchored at cell corners with a stride of
/// half a side, plus one cube flush with the upper end. Vector fields use the
/// Euclidean norm of the deviation.
pub fn bmo_seminorm(field: &FieldSet, sizes: &[f64]) -> Result<f64> {
    if sizes.is_empty() || sizes.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Precondition("cube sizes must be positive and nonempty".into()));
    }
    let g = field.grid();
    let dim = g.dim();
    let mut best = 0.0f64;
    for &size in sizes {
        let sides = cube_sides(g, size);
        let axes: Vec<Vec<usize>> = (0..3)
            .map(|a| if a < dim { anchors(g.cells()[a], sides[a]) } else { vec![0] })
            .collect();
        let mut corners = Vec::new();
        for &i in &axes[0] {
            for &j in &axes[1] {
                for &k in &axes[2] {
                    corners.push([i, j, k]);
                }
            }
        }
        let worst = corners
            .par_iter()
            .map(|lo| mean_oscillation(field, *lo, sides))
            .reduce(|| 0.0, f64::max);
        best = best.max(worst);
    }
    Ok(best)
}

/// `(1/R) ∫₀^R ∫_{B_R} |∂_{x₃} W|² dx₃` on a 3-d grid.
///
/// `B_R` is the centered square of side `2R` in the first two axes (whole
/// cells, clipped to the domain) and the `x₃` range is the first `R/h₃`
/// cells; `R` is replaced by the realized thickness of those cells.
pub fn slab_criterion(field: &FieldSet, r: f64) -> Result<f64> {
    let g = field.grid();
    if g.dim() != 3 {
        return Err(Error::Precondition("slab criterion needs a 3-d grid".into()));
    }
    if !(r > 0.0) || r > g.extent()[2] * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "R = {r} must lie in (0, {}]",
            g.extent()[2]
        )));
    }
    let dw = gradient(g, field)?;
    let n3 = ((r / g.spacing()[2]).round() as usize).clamp(1, g.cells()[2]);
    let mut lo = [0usize; 2];
    let mut hi = [0usize; 2];
    for a in 0..2 {
        let n = g.cells()[a];
        let side = ((2.0 * r / g.spacing()[a]).round() as usize).clamp(1, n);
        lo[a] = (n - side) / 2;
        hi[a] = lo[a] + side;
    }
    let mut s = 0.0;
    for i in lo[0]..hi[0] {
        for j in lo[1]..hi[1] {
            for k in 0..n3 {
                let cell = g.ravel([i, j, k]);
                for c in 0..field.m() {
                    s += dw.get(c, 2, cell).powi(2);
                }
            }
        }
    }
    let r_eff = n3 as f64 * g.spacing()[2];
    Ok(s * g.cell_volume() / r_eff)
}
