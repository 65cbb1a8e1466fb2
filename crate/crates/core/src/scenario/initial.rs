use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{at_section, join, Document, Section};
use crate::error::{Error, Result};
use crate::functionals::{principal_eigenpair, Normalization};
use crate::mesh::{read_field_csv, FieldSet, Grid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Basis {
    Sin,
    Cos,
}

/// Named initial-data generators.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialKind {
    /// One value per component (a single value broadcasts).
    Constant { value: Vec<f64> },
    /// `Σ_j amp_j Π_a basis(π k_j ξ_a)` with `ξ_a = (x_a − o_a)/L_a`; axes in
    /// `flat_axes` are left out of the product. With `random`, each
    /// `(component, term)` amplitude is multiplied by a seeded draw in `[−1, 1]`.
    Trig {
        modes: Vec<f64>,
        amplitudes: Vec<f64>,
        basis: Basis,
        flat_axes: Vec<usize>,
        random: bool,
    },
    /// `amp · exp(1 − 1/(1 − r²/ρ²))` inside radius `ρ`.
    Bump { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// Principal Dirichlet eigenfunction of `−Δ` with unit sup norm.
    Eigenfunction { amplitude: f64 },
    /// Field CSV written by the mesh module.
    File { path: PathBuf },
}

/// Initial data: a generator plus per-component scales and an offset.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub m: usize,
    pub scale: Vec<f64>,
    pub offset: f64,
    pub seed: Option<u64>,
}

impl InitialSpec {
    pub(crate) fn parse(sec: &Section, m: usize) -> Result<InitialSpec> {
        let p = Document::params(sec, &[])?;
        let spec = at_section(sec, (|| {
            let kind = match p.req_str("kind")?.trim() {
                "constant" => InitialKind::Constant { value: p.req_vec("value")? },
                "trig" => {
                    let modes = p.req_vec("modes")?;
                    let amplitudes = p.vec("amplitudes")?.unwrap_or_else(|| vec![1.0; modes.len()]);
                    if amplitudes.len() != modes.len() {
                        return Err(Error::Parse {
                            line: p.line_of("amplitudes"),
                            msg: "`amplitudes` needs one entry per mode".into(),
                        });
                    }
                    let basis = match p.str("basis").map(str::trim).unwrap_or("sin") {
                        "sin" => Basis::Sin,
                        "cos" => Basis::Cos,
                        other => {
                            return Err(Error::Parse {
                                line: p.line_of("basis"),
                                msg: format!("unknown basis `{other}`"),
                            })
                        }
                    };
                    let random = match p.str("random").map(str::trim).unwrap_or("false") {
                        "true" => true,
                        "false" => false,
                        other => {
                            return Err(Error::Parse {
                                line: p.line_of("random"),
                                msg: format!("`random` must be true or false, got `{other}`"),
                            })
                        }
                    };
                    InitialKind::Trig {
                        modes,
                        amplitudes,
                        basis,
                        flat_axes: p.usize_vec("flat_axes")?.unwrap_or_default(),
                        random,
                    }
                }
                "bump" => InitialKind::Bump {
                    center: p.req_vec("center")?,
                    radius: p.req_f64("radius")?,
                    amplitude: p.f64_or("amplitude", 1.0)?,
                },
                "eigenfunction" => InitialKind::Eigenfunction {
                    amplitude: p.f64_or("amplitude", 1.0)?,
                },
                "file" => InitialKind::File {
                    path: PathBuf::from(p.req_str("path")?.trim()),
                },
                other => {
                    return Err(Error::Parse {
                        line: p.line_of("kind"),
                        msg: format!("unknown initial kind `{other}`"),
                    })
                }
            };
            let scale = match p.vec("scale")? {
                None => vec![1.0; m],
                Some(v) if v.len() == 1 => vec![v[0]; m],
                Some(v) if v.len() == m => v,
                Some(v) => {
                    return Err(Error::Parse {
                        line: p.line_of("scale"),
                        msg: format!("`scale` needs 1 or {m} entries, got {}", v.len()),
                    })
                }
            };
            let seed = match p.str("seed") {
                None => None,
                Some(s) => Some(s.trim().parse::<u64>().map_err(|_| Error::Parse {
                    line: p.line_of("seed"),
                    msg: format!("`seed`: expected a non-negative integer, got `{s}`"),
                })?),
            };
            let spec = InitialSpec {
                kind,
                m,
                scale,
                offset: p.f64_or("offset", 0.0)?,
                seed,
            };
            if let InitialKind::Constant { value } = &spec.kind {
                if value.len() != 1 && value.len() != m {
                    return Err(Error::Parse {
                        line: p.line_of("value"),
                        msg: format!("`value` needs 1 or {m} entries"),
                    });
                }
            }
            if let InitialKind::Bump { radius, .. } = &spec.kind {
                if !(*radius > 0.0) {
                    return Err(Error::Parse { line: p.line_of("radius"), msg: "`radius` must be positive".into() });
                }
            }
            Ok(spec)
        })())?;
        p.finish("initial")?;
        Ok(spec)
    }

    pub(crate) fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| e.push((k.to_string(), v));
        match &self.kind {
            InitialKind::Constant { value } => {
                put("kind", "constant".into());
                put("value", join(value));
            }
            InitialKind::Trig {
                modes,
                amplitudes,
                basis,
                flat_axes,
                random,
            } => {
                put("kind", "trig".into());
                put("modes", join(modes));
                put("amplitudes", join(amplitudes));
                put("basis", if *basis == Basis::Sin { "sin" } else { "cos" }.into());
                if !flat_axes.is_empty() {
                    put("flat_axes", join(flat_axes));
                }
                put("random", random.to_string());
            }
            InitialKind::Bump { center, radius, amplitude } => {
                put("kind", "bump".into());
                put("center", join(center));
                put("radius", radius.to_string());
                put("amplitude", amplitude.to_string());
            }
            InitialKind::Eigenfunction { amplitude } => {
                put("kind", "eigenfunction".into());
                put("amplitude", amplitude.to_string());
            }
            InitialKind::File { path } => {
                put("kind", "file".into());
                put("path", path.display().to_string());
            }
        }
        put("scale", join(&self.scale));
        put("offset", self.offset.to_string());
        if let Some(s) = self.seed {
            put("seed", s.to_string());
        }
        e
    }

    /// Evaluates the generator on `grid`; `seed` is used when the generator has
    /// none of its own. `path` resolves file sources.
    pub fn build(&self, grid: &Grid, seed: u64, resolve: &dyn Fn(&std::path::Path) -> PathBuf) -> Result<FieldSet> {
        let m = self.m;
        let dim = grid.dim();
        let base: Vec<f64> = match &self.kind {
            InitialKind::Constant { value } => {
                let n = grid.n_cells();
                let mut v = Vec::with_capacity(m * n);
                for c in 0..m {
                    let x = if value.len() == 1 { value[0] } else { value[c] };
                    v.extend(std::iter::repeat(x).take(n));
                }
                v
            }
            InitialKind::Trig {
                modes,
                amplitudes,
                basis,
                flat_axes,
                random,
            } => {
                if let Some(a) = flat_axes.iter().find(|a| **a >= dim) {
                    return Err(Error::Config(format!("flat axis {a} ≥ grid dimension {dim}")));
                }
                let mut amps = vec![amplitudes.clone(); m];
                if *random {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(seed));
                    for row in amps.iter_mut() {
                        for a in row.iter_mut() {
                            *a *= rng.gen_range(-1.0..=1.0);
                        }
                    }
                }
                let (o, l) = (grid.origin().to_vec(), grid.extent().to_vec());
                FieldSet::from_fn(grid, m, |x, w| {
                    for c in 0..m {
                        w[c] = modes
                            .iter()
                            .zip(&amps[c])
                            .map(|(k, a)| {
                                a * (0..dim)
                                    .filter(|ax| !flat_axes.contains(ax))
                                    .map(|ax| {
                                        let arg = PI * k * (x[ax] - o[ax]) / l[ax];
                                        match basis {
                                            Basis::Sin => arg.sin(),
                                            Basis::Cos => arg.cos(),
                                        }
                                    })
                                    .product::<f64>()
                            })
                            .sum();
                    }
                })
                .into_values()
            }
            InitialKind::Bump { center, radius, amplitude } => {
                if center.len() != dim {
                    return Err(Error::Config(format!("bump center needs {dim} coordinates")));
                }
                FieldSet::from_fn(grid, m, |x, w| {
                    let r2: f64 = (0..dim).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>() / (radius * radius);
                    let v = if r2 < 1.0 { amplitude * (1.0 - 1.0 / (1.0 - r2)).exp() } else { 0.0 };
                    w.iter_mut().for_each(|c| *c = v);
                })
                .into_values()
            }
            InitialKind::Eigenfunction { amplitude } => {
                let pair = principal_eigenpair(grid, &vec![1.0; grid.n_cells()], Normalization::Sup)?;
                let phi = pair.eigenfunction.component(0).to_vec();
                let mut v = Vec::with_capacity(m * phi.len());
                for _ in 0..m {
                    v.extend(phi.iter().map(|p| amplitude * p));
                }
                v
            }
            InitialKind::File { path } => {
                let f = read_field_csv(&resolve(path))?;
                if f.m() != m || f.grid().cells() != grid.cells() || f.grid().extent() != grid.extent() {
                    return Err(Error::Config(format!(
                        "{}: field shape does not match the scenario grid and model",
                        path.display()
                    )));
                }
                f.into_values()
            }
        };
        let n = grid.n_cells();
        let vals: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, v)| self.scale[i / n] * v + self.offset)
            .collect();
        FieldSet::from_values(grid, m, vals)
    }
}
