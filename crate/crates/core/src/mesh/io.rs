//! Plain-text field layout.
//!
//! ```text
//! dim,2
//! cells,4,4
//! origin,0,0
//! extent,1,1
//! bc,neumann,neumann,neumann,neumann
//! m,1
//! time,0
//! cell,x0,x1,w0
//! 0,0.125,0.125,1.5
//! ...
//! ```
//! Rows follow lexicographic cell order (last axis fastest). Numbers use the
//! shortest representation that round-trips exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Bc, FieldSet, Grid};
use crate::error::{Error, Result};

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn field_to_csv(field: &FieldSet) -> String {
    let g = field.grid();
    let dim = g.dim();
    let mut s = String::new();
    s.push_str(&format!("dim,{dim}\n"));
    s.push_str(&format!("cells,{}\n", join(g.cells())));
    s.push_str(&format!("origin,{}\n", join(g.origin())));
    s.push_str(&format!("extent,{}\n", join(g.extent())));
    let bcs: Vec<String> = g.bcs().iter().flat_map(|b| [b[0].key(), b[1].key()]).collect();
    s.push_str(&format!("bc,{}\n", bcs.join(",")));
    s.push_str(&format!("m,{}\n", field.m()));
    s.push_str(&format!("time,{}\n", field.time));
    s.push_str("cell");
    for a in 0..dim {
        s.push_str(&format!(",x{a}"));
    }
    for c in 0..field.m() {
        s.push_str(&format!(",w{c}"));
    }
    s.push('\n');
    for cell in 0..g.n_cells() {
        let x = g.center(cell);
        s.push_str(&cell.to_string());
        for xa in x.iter().take(dim) {
            s.push_str(&format!(",{xa}"));
        }
        for c in 0..field.m() {
            s.push_str(&format!(",{}", field.get(c, cell)));
        }
        s.push('\n');
    }
    s
}

pub fn write_field_csv(path: &Path, field: &FieldSet) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(field_to_csv(field).as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, Vec<&'a str>)> {
    let (no, line) = lines.next().ok_or(Error::Parse {
        line: 0,
        msg: format!("missing `{key}` header"),
    })?;
    let mut parts = line.split(',');
    if parts.next().map(str::trim) != Some(key) {
        return Err(Error::Parse {
            line: no + 1,
            msg: format!("expected `{key}` header"),
        });
    }
    Ok((no + 1, parts.map(str::trim).collect()))
}

fn nums<T: std::str::FromStr>(line: usize, items: &[&str]) -> Result<Vec<T>> {
    items
        .iter()
        .map(|t| {
            t.parse::<T>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad number `{t}`"),
            })
        })
        .collect()
}

pub fn field_from_csv(text: &str) -> Result<FieldSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (ln, d) = header(&mut lines, "dim")?;
    let dim: usize = nums(ln, &d)?.first().copied().unwrap_or(0);
    let (ln, c) = header(&mut lines, "cells")?;
    let cells: Vec<usize> = nums(ln, &c)?;
    let (ln, o) = header(&mut lines, "origin")?;
    let origin: Vec<f64> = nums(ln, &o)?;
    let (ln, e) = header(&mut lines, "extent")?;
    let extent: Vec<f64> = nums(ln, &e)?;
    let (ln, b) = header(&mut lines, "bc")?;
    if b.len() != 2 * dim {
        return Err(Error::Parse {
            line: ln,
            msg: format!("expected {} boundary tags", 2 * dim),
        });
    }
    let mut bcs = Vec::new();
    for pair in b.chunks(2) {
        let lo = Bc::parse(pair[0]).map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?;
        let hi = Bc::parse(pair[1]).map_err(|e| Error::Parse { line: ln, msg: e.to_string() })?;
        bcs.push([lo, hi]);
    }
    let (ln, mm) = header(&mut lines, "m")?;
    let m: usize = nums(ln, &mm)?.first().copied().unwrap_or(0);
    let (ln, t) = header(&mut lines, "time")?;
    let time: f64 = nums(ln, &t)?.first().copied().unwrap_or(0.0);
    if cells.len() != dim || extent.len() != dim || origin.len() != dim {
        return Err(Error::Parse {
            line: ln,
            msg: "header arity does not match dim".into(),
        });
    }
    let grid = Grid::new(&origin, &extent, &cells, &bcs)?;
    header(&mut lines, "cell")?;
    let n = grid.n_cells();
    let mut values = vec![0.0; m * n];
    let mut seen = 0usize;
    for (no, line) in lines {
        let row: Vec<&str> = line.split(',').map(str::trim).collect();
        if row.len() != 1 + dim + m {
            return Err(Error::Parse {
                line: no + 1,
                msg: format!("expected {} columns, got {}", 1 + dim + m, row.len()),
            });
        }
        let cell: usize = nums(no + 1, &row[..1])?[0];
        if cell != seen || cell >= n {
            return Err(Error::Parse {
                line: no + 1,
                msg: format!("cell index {cell} out of order"),
            });
        }
        let w: Vec<f64> = nums(no + 1, &row[1 + dim..])?;
        for (ci, v) in w.into_iter().enumerate() {
            values[ci * n + cell] = v;
        }
        seen += 1;
    }
    if seen != n {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected {n} rows, found {seen}"),
        });
    }
    let mut f = FieldSet::from_values(&grid, m, values)?;
    f.time = time;
    Ok(f)
}

pub fn read_field_csv(path: &Path) -> Result<FieldSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    field_from_csv(&text)
}
