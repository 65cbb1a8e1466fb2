//! Structured cell-centered grids on boxes and slabs.
//!
//! Values live at cell centers. Boundary conditions are realized through one
//! layer of ghost cells (see [`Padded`]); every discrete operator in the crate
//! reads its boundary data from that layer so Dirichlet, Neumann and
//! (anti)periodic ends share one stencil family.

mod calculus;
mod io;
mod reflect;

pub use calculus::{
    divergence, divergence_form, gradient, gradient_padded, integrate, integrate_components,
    Padded, TensorLayout,
};
pub use io::{field_from_csv, field_to_csv, read_field_csv, write_field_csv};
pub use reflect::{reflect, restrict, seam_residual, Parity};

use crate::error::{Error, Result};

/// Boundary condition on one end of one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bc {
    DirichletZero,
    NeumannZero,
    Periodic,
    Antiperiodic,
    /// Dirichlet data with a constant boundary trace.
    DirichletValue(f64),
}

impl Bc {
    pub fn is_wrapping(self) -> bool {
        matches!(self, Bc::Periodic | Bc::Antiperiodic)
    }

    pub fn is_dirichlet(self) -> bool {
        matches!(self, Bc::DirichletZero | Bc::DirichletValue(_))
    }

    /// Stable text key used by config files and CSV headers.
    pub fn key(self) -> String {
        match self {
            Bc::DirichletZero => "dirichlet".into(),
            Bc::NeumannZero => "neumann".into(),
            Bc::Periodic => "periodic".into(),
            Bc::Antiperiodic => "antiperiodic".into(),
            Bc::DirichletValue(v) => format!("value:{v}"),
        }
    }

    pub fn parse(text: &str) -> Result<Bc> {
        let t = text.trim();
        match t {
            "dirichlet" | "dirichlet0" => Ok(Bc::DirichletZero),
            "neumann" | "neumann0" => Ok(Bc::NeumannZero),
            "periodic" => Ok(Bc::Periodic),
            "antiperiodic" => Ok(Bc::Antiperiodic),
            _ => {
                if let Some(v) = t.strip_prefix("value:") {
                    v.parse::<f64>()
                        .map(Bc::DirichletValue)
                        .map_err(|_| Error::Config(format!("bad boundary value `{t}`")))
                } else {
                    Err(Error::Config(format!("unknown boundary condition `{t}`")))
                }
            }
        }
    }
}

/// Axis-aligned box `origin + [0, extent]` split into `cells` per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    origin: Vec<f64>,
    extent: Vec<f64>,
    cells: Vec<usize>,
    spacing: Vec<f64>,
    bcs: Vec<[Bc; 2]>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(origin: &[f64], extent: &[f64], cells: &[usize], bcs: &[[Bc; 2]]) -> Result<Grid> {
        let dim = extent.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("grid dimension {dim} not in 1..=3")));
        }
        if origin.len() != dim || cells.len() != dim || bcs.len() != dim {
            return Err(Error::Config(
                "origin, extent, cells and bcs must all have one entry per axis".into(),
            ));
        }
        for a in 0..dim {
            if !(extent[a] > 0.0) || !extent[a].is_finite() {
                return Err(Error::Config(format!(
                    "extent on axis {a} must be positive, got {}",
                    extent[a]
                )));
            }
            if cells[a] < 2 {
                return Err(Error::Config(format!(
                    "axis {a} needs at least 2 cells, got {}",
                    cells[a]
                )));
            }
            let [lo, hi] = bcs[a];
            if lo.is_wrapping() || hi.is_wrapping() {
                if lo != hi {
                    return Err(Error::Config(format!(
                        "axis {a}: periodic/antiperiodic must be declared on both ends"
                    )));
                }
            }
        }
        let spacing = (0..dim).map(|a| extent[a] / cells[a] as f64).collect();
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * cells[a + 1];
        }
        Ok(Grid {
            dim,
            origin: origin.to_vec(),
            extent: extent.to_vec(),
            cells: cells.to_vec(),
            spacing,
            bcs: bcs.to_vec(),
            strides,
        })
    }

    /// Box anchored at the origin with the same condition on every end.
    pub fn boxed(extent: &[f64], cells: &[usize], bc: Bc) -> Result<Grid> {
        let origin = vec![0.0; extent.len()];
        let bcs = vec![[bc, bc]; extent.len()];
        Grid::new(&origin, extent, cells, &bcs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn extent(&self) -> &[f64] {
        &self.extent
    }
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }
    pub fn bcs(&self) -> &[[Bc; 2]] {
        &self.bcs
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Multi-index of a linear cell index (lexicographic, last axis fastest).
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in 0..self.dim {
            out[a] = idx / self.strides[a];
            idx %= self.strides[a];
        }
        out
    }

    pub fn ravel(&self, ijk: [usize; 3]) -> usize {
        (0..self.dim).map(|a| ijk[a] * self.strides[a]).sum()
    }

    /// Cell-center coordinate along one axis for a (possibly ghost) index.
    pub fn coord(&self, axis: usize, i: isize) -> f64 {
        self.origin[axis] + (i as f64 + 0.5) * self.spacing[axis]
    }

    /// Cell center of a linear index; unused axes are zero.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unravel(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coord(a, ijk[a] as isize);
        }
        x
    }

    pub(crate) fn with_axis(&self, axis: usize, extent: f64, cells: usize, bc: [Bc; 2]) -> Grid {
        let mut e = self.extent.clone();
        let mut c = self.cells.clone();
        let mut b = self.bcs.clone();
        e[axis] = extent;
        c[axis] = cells;
        b[axis] = bc;
        Grid::new(&self.origin, &e, &c, &b).expect("derived grid stays valid")
    }
}

/// m-component state sampled at the cell centers of a grid.
///
/// Values are stored component-major: `values[c * n_cells + cell]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSet {
    grid: Grid,
    m: usize,
    values: Vec<f64>,
    pub time: f64,
}

impl FieldSet {
    pub fn zeros(grid: &Grid, m: usize) -> FieldSet {
        FieldSet {
            grid: grid.clone(),
            m,
            values: vec![0.0; m * grid.n_cells()],
            time: 0.0,
        }
    }

    pub fn from_values(grid: &Grid, m: usize, values: Vec<f64>) -> Result<FieldSet> {
        if m == 0 || values.len() != m * grid.n_cells() {
            return Err(Error::Shape(format!(
                "expected {} values for {m} components on {} cells, got {}",
                m * grid.n_cells(),
                grid.n_cells(),
                values.len()
            )));
        }
        Ok(FieldSet {
            grid: grid.clone(),
            m,
            values,
            time: 0.0,
        })
    }

    /// Samples `f(x, out)` at every cell center.
    pub fn from_fn(grid: &Grid, m: usize, f: impl Fn(&[f64; 3], &mut [f64])) -> FieldSet {
        let n = grid.n_cells();
        let mut values = vec![0.0; m * n];
        let mut buf = vec![0.0; m];
        for cell in 0..n {
            f(&grid.center(cell), &mut buf);
            for c in 0..m {
                values[c * n + cell] = buf[c];
            }
        }
        FieldSet {
            grid: grid.clone(),
            m,
            values,
            time: 0.0,
        }
    }

    /// Scalar field from a function of the cell center.
    pub fn scalar(grid: &Grid, f: impl Fn(&[f64; 3]) -> f64) -> FieldSet {
        FieldSet::from_fn(grid, 1, |x, out| out[0] = f(x))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.n_cells();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.n_cells();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, cell: usize) -> f64 {
        self.values[c * self.n_cells() + cell]
    }

    /// State vector W at one cell.
    pub fn state_at(&self, cell: usize, out: &mut [f64]) {
        let n = self.n_cells();
        for c in 0..self.m {
            out[c] = self.values[c * n + cell];
        }
    }

    /// Euclidean |W| at every cell.
    pub fn magnitude(&self) -> Vec<f64> {
        let n = self.n_cells();
        (0..n)
            .map(|cell| {
                (0..self.m)
                    .map(|c| self.values[c * n + cell].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// max over cells and components of |w|; NaN if any entry is not finite.
    pub fn sup_norm(&self) -> f64 {
        let mut s = 0.0f64;
        for &v in &self.values {
            if !v.is_finite() {
                return f64::NAN;
            }
            s = s.max(v.abs());
        }
        s
    }

    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let n = self.n_cells();
        self.values
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / n, p % n))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FieldSet {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = f(*v));
        out
    }
}

/// Per-component spatial vector field: `values[(c * dim + dir) * n_cells + cell]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    m: usize,
    values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: &Grid, m: usize) -> VectorField {
        VectorField {
            grid: grid.clone(),
            m,
            values: vec![0.0; m * grid.dim() * grid.n_cells()],
        }
    }

    pub fn from_values(grid: &Grid, m: usize, values: Vec<f64>) -> Result<VectorField> {
        if values.len() != m * grid.dim() * grid.n_cells() {
            return Err(Error::Shape(format!(
                "vector field needs {} values, got {}",
                m * grid.dim() * grid.n_cells(),
                values.len()
            )));
        }
        Ok(VectorField {
            grid: grid.clone(),
            m,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slot(&self, c: usize, dir: usize) -> &[f64] {
        let n = self.grid.n_cells();
        let o = (c * self.grid.dim() + dir) * n;
        &self.values[o..o + n]
    }

    pub fn slot_mut(&mut self, c: usize, dir: usize) -> &mut [f64] {
        let n = self.grid.n_cells();
        let o = (c * self.grid.dim() + dir) * n;
        &mut self.values[o..o + n]
    }

    pub fn get(&self, c: usize, dir: usize, cell: usize) -> f64 {
        self.values[(c * self.grid.dim() + dir) * self.grid.n_cells() + cell]
    }

    /// Σ over components and directions of the squared entries, per cell.
    pub fn squared_norm(&self) -> Vec<f64> {
        let n = self.grid.n_cells();
        let mut out = vec![0.0; n];
        for chunk in self.values.chunks(n) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v * v;
            }
        }
        out
    }
}
