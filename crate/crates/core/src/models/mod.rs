//! Diffusion-tensor and reaction families, pointwise evaluation and
//! sampled ellipticity estimates.

mod diffusion;
mod maps;
mod params;
mod reaction;

pub use diffusion::{js_admissible, js_factor, js_radicand, Diffusion};
pub use maps::{Poly, PotentialMap, Weight};
pub use params::Params;
pub use reaction::{PointwiseFn, Reaction};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::TensorLayout;

/// A validated model: diffusion family, reaction family and growth metadata.
///
/// The ellipticity weight is `λ(W) = lambda_scale · (1 + |W|^k)`.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub diffusion: Diffusion,
    pub reaction: Reaction,
    pub k: f64,
    pub lambda_scale: f64,
}

impl ModelSpec {
    /// Validates the pair and derives `k` from the diffusion family.
    pub fn new(diffusion: Diffusion, reaction: Reaction) -> Result<ModelSpec> {
        let diffusion = normalize(diffusion);
        diffusion.validate(None)?;
        reaction.validate(diffusion.m())?;
        Ok(ModelSpec {
            k: diffusion.derived_k(),
            diffusion,
            reaction,
            lambda_scale: 1.0,
        })
    }

    /// Like [`ModelSpec::new`] but checks a declared growth exponent.
    pub fn with_k(diffusion: Diffusion, reaction: Reaction, k: f64) -> Result<ModelSpec> {
        let spec = ModelSpec::new(diffusion, reaction)?;
        if !(k >= 0.0) {
            return Err(Error::Config(format!("growth exponent k = {k} must be ≥ 0")));
        }
        if (spec.k - k).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "declared k = {k} does not match the {} family (k = {})",
                spec.diffusion.name(),
                spec.k
            )));
        }
        Ok(spec)
    }

    pub fn m(&self) -> usize {
        self.diffusion.m()
    }

    pub fn layout(&self) -> TensorLayout {
        self.diffusion.layout()
    }

    pub fn tensor_len(&self, dim: usize) -> usize {
        self.layout().len(self.m(), dim)
    }

    pub fn lambda(&self, w: &[f64]) -> f64 {
        self.lambda_scale * (1.0 + maps::pow_or_one(maps::norm(w), self.k))
    }

    pub fn potential(&self) -> Option<PotentialMap> {
        self.diffusion.potential()
    }
}

fn normalize(d: Diffusion) -> Diffusion {
    match d {
        Diffusion::Skt { d, alpha } if alpha.iter().all(|a| *a == 0.0) => {
            let m = d.len();
            let mut matrix = vec![0.0; m * m];
            for i in 0..m {
                matrix[i * m + i] = d[i];
            }
            Diffusion::Constant { m, matrix }
        }
        other => other,
    }
}

fn square_m(len: usize, what: &str) -> Result<usize> {
    let m = (len as f64).sqrt().round() as usize;
    if m * m != len || m == 0 {
        return Err(Error::Config(format!("{what}: {len} entries do not form a square matrix")));
    }
    Ok(m)
}

fn pair(p: &Params, key: &str) -> Result<[f64; 2]> {
    match p.vec(key)? {
        None => Ok([0.0; 2]),
        Some(v) if v.len() == 2 => Ok([v[0], v[1]]),
        Some(_) => Err(Error::Parse {
            line: p.line_of(key),
            msg: format!("`{key}` needs two values"),
        }),
    }
}

/// Builds a model from `[model]` parameters.
///
/// Keys: `diffusion` (family name) with its parameters, optional `k`,
/// `lambda_scale`, and `reaction` (default `none`) with its parameters.
pub fn build_model(p: &Params) -> Result<ModelSpec> {
    let family = p.req_str("diffusion")?.trim().to_string();
    let diffusion = match family.as_str() {
        "constant" => {
            let matrix = p.req_vec("matrix")?;
            let m = square_m(matrix.len(), "matrix")?;
            Diffusion::Constant { m, matrix }
        }
        "identity" => {
            let m = p.usize("m")?.unwrap_or(1);
            let mut matrix = vec![0.0; m * m];
            (0..m).for_each(|i| matrix[i * m + i] = 1.0);
            Diffusion::Constant { m, matrix }
        }
        "skt" => {
            let d = p.req_vec("d")?;
            let alpha = p.vec("alpha")?.unwrap_or_else(|| vec![0.0; d.len() * d.len()]);
            Diffusion::Skt { d, alpha }
        }
        "scalar_weight" => {
            let matrix = p.req_vec("matrix")?;
            square_m(matrix.len(), "matrix")?;
            let gamma = p.weight("gamma")?.unwrap_or(Weight::Constant(1.0));
            Diffusion::ScalarWeight { gamma, matrix }
        }
        "factored_rows" => {
            let m = p.usize("m")?.unwrap_or(2);
            let mut entries = Vec::new();
            for i in 1..=m {
                for j in 1..=m {
                    let key = format!("a{i}{j}");
                    let poly = p.poly(&key)?.unwrap_or(Poly::constant(if i == j { 1.0 } else { 0.0 }));
                    entries.push(poly);
                }
            }
            let mut gamma = Vec::new();
            for i in 1..=m {
                gamma.push(p.weight(&format!("gamma{i}"))?.unwrap_or(Weight::Constant(1.0)));
            }
            Diffusion::FactoredRows { entries, gamma }
        }
        "diagonal_power_law" | "diagonal_separate" => {
            let exps = match p.vec("exps")? {
                Some(e) => e,
                None => vec![p.req_f64("m0")?; p.usize("m")?.unwrap_or(1)],
            };
            if family == "diagonal_power_law" {
                Diffusion::DiagonalPowerLaw { exps }
            } else {
                Diffusion::DiagonalSeparate { exps }
            }
        }
        "k_shifted" => Diffusion::KShifted {
            m: p.usize("m")?.unwrap_or(2),
            k_shift: p.req_f64("k_shift")?,
            m0: p.req_f64("m0")?,
        },
        "js_tensor" => Diffusion::JsTensor {
            kappa: p.req_f64("kappa")?,
            theta: p.req_f64("theta")?,
        },
        "triangular" => {
            let exps = p.req_vec("exps")?;
            let mut cross = Vec::new();
            for i in 1..=exps.len() {
                cross.push(p.poly(&format!("c{i}"))?.unwrap_or(Poly::constant(0.0)));
            }
            let dv = p.poly("dv")?.unwrap_or(Poly::constant(1.0));
            Diffusion::Triangular { exps, cross, dv }
        }
        other => {
            return Err(Error::Parse {
                line: p.line_of("diffusion"),
                msg: format!("unknown diffusion family `{other}`"),
            })
        }
    };
    let m = diffusion.m();
    let reaction = match p.str("reaction").map(str::trim).unwrap_or("none") {
        "none" => Reaction::None,
        "linear_matrix" => {
            if p.contains("g0") {
                Reaction::LinearMatrix {
                    m,
                    g0: p.req_vec("g0")?,
                    g1: p.vec("g1")?.unwrap_or_else(|| vec![0.0; m * m * m]),
                }
            } else {
                Reaction::planar(pair(p, "g_b")?, pair(p, "g_c")?, pair(p, "g_k")?, pair(p, "g_l")?)
            }
        }
        "power_law" => Reaction::PowerLaw {
            coef: p.req_f64("coef")?,
            power: p.f64_or("power", 1.0)?,
        },
        "potential_pair" => {
            let m0 = match &diffusion {
                Diffusion::DiagonalPowerLaw { exps } if exps.iter().all(|e| *e == exps[0]) => exps[0],
                _ => {
                    return Err(Error::Parse {
                        line: p.line_of("reaction"),
                        msg: "potential_pair needs diagonal_power_law diffusion with equal exponents"
                            .into(),
                    })
                }
            };
            Reaction::power_pair(p.req_f64("beta")?, p.req_f64("p")?, m0)
        }
        "gradient" => Reaction::Gradient {
            q: p.req_f64("q")?,
            coef: p.f64_or("coef", 0.0)?,
            power: p.f64_or("power", 0.0)?,
        },
        other => {
            return Err(Error::Parse {
                line: p.line_of("reaction"),
                msg: format!("unknown reaction family `{other}`"),
            })
        }
    };
    let wrap = |e: Error, key: &str| match e {
        Error::Config(msg) => Error::Parse {
            line: p.line_of(key),
            msg,
        },
        other => other,
    };
    let mut spec = match p.f64("k")? {
        Some(k) => ModelSpec::with_k(diffusion, reaction, k).map_err(|e| wrap(e, "k"))?,
        None => ModelSpec::new(diffusion, reaction).map_err(|e| wrap(e, "diffusion"))?,
    };
    spec.lambda_scale = p.f64_or("lambda_scale", 1.0)?;
    if !(spec.lambda_scale > 0.0) {
        return Err(Error::Parse {
            line: p.line_of("lambda_scale"),
            msg: "lambda_scale must be positive".into(),
        });
    }
    Ok(spec)
}

/// Pointwise diffusion tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionTensor {
    pub layout: TensorLayout,
    pub m: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl DiffusionTensor {
    fn size(&self) -> usize {
        match self.layout {
            TensorLayout::ComponentMatrix => self.m,
            TensorLayout::FullTensor => self.m * self.dim,
        }
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.size() + c]
    }

    /// `⟨Aξ, ξ⟩`. For a component matrix, `ξ` may have `m` entries (one
    /// direction) or `m·dim` entries ordered `(component, direction)`.
    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        let s = self.size();
        match self.layout {
            TensorLayout::FullTensor => {
                let mut q = 0.0;
                for r in 0..s {
                    for c in 0..s {
                        q += xi[r] * self.values[r * s + c] * xi[c];
                    }
                }
                q
            }
            TensorLayout::ComponentMatrix => {
                let dirs = xi.len() / self.m;
                let mut q = 0.0;
                for a in 0..dirs {
                    for i in 0..s {
                        for j in 0..s {
                            q += xi[i * dirs + a] * self.values[i * s + j] * xi[j * dirs + a];
                        }
                    }
                }
                q
            }
        }
    }

    /// `max_r Σ_c |A_rc|`.
    pub fn max_row_sum(&self) -> f64 {
        max_row_sum(&self.values, self.size())
    }
}

pub fn max_row_sum(values: &[f64], size: usize) -> f64 {
    values
        .chunks(size)
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Diffusion tensor of `model` at state `w` for a `dim`-dimensional domain.
pub fn eval_diffusion(model: &ModelSpec, w: &[f64], dim: usize) -> DiffusionTensor {
    let layout = model.layout();
    let mut values = vec![0.0; layout.len(model.m(), dim)];
    model.diffusion.eval_into(w, &mut values);
    DiffusionTensor {
        layout,
        m: model.m(),
        dim,
        values,
    }
}

/// Reaction `g(W)`; `dw` (ordered `(component, direction)`) is required by the
/// gradient family and ignored otherwise.
pub fn eval_reaction(model: &ModelSpec, w: &[f64], dw: Option<&[f64]>) -> Result<Vec<f64>> {
    if model.reaction.needs_gradient() && dw.is_none() {
        return Err(Error::Precondition("gradient reaction needs DW".into()));
    }
    let mut out = vec![0.0; model.m()];
    model.reaction.eval_into(w, dw, &mut out);
    Ok(out)
}

/// Outcome of a sampled ellipticity check.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityEstimate {
    /// `min ⟨A(W)ξ, ξ⟩ / (max(1, |W|^k) |ξ|²)` over the samples.
    pub estimate: f64,
    pub elliptic: bool,
    pub worst_sample: usize,
}

/// Smallest normalized quadratic form over `(W, ξ)` samples.
pub fn ellipticity_estimate(
    model: &ModelSpec,
    samples: &[(Vec<f64>, Vec<f64>)],
    dim: usize,
) -> Result<EllipticityEstimate> {
    if samples.is_empty() {
        return Err(Error::Precondition("ellipticity estimate needs samples".into()));
    }
    let mut best = f64::INFINITY;
    let mut worst = 0;
    for (n, (w, xi)) in samples.iter().enumerate() {
        let x2: f64 = xi.iter().map(|v| v * v).sum();
        if !(x2 > 0.0) {
            return Err(Error::Precondition(format!("sample {n} has ξ = 0")));
        }
        let a = eval_diffusion(model, w, dim);
        let scale = maps::pow_or_one(maps::norm(w), model.k).max(1.0);
        let r = a.quadratic_form(xi) / (scale * x2);
        if r < best {
            best = r;
            worst = n;
        }
    }
    Ok(EllipticityEstimate {
        estimate: best,
        elliptic: best > 0.0,
        worst_sample: worst,
    })
}

/// Uniform `(W, ξ)` draws with `W ∈ [−radius, radius]^m`, `ξ ∈ [−1, 1]^len`.
pub fn random_samples(m: usize, xi_len: usize, count: usize, radius: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let w = (0..m).map(|_| rng.gen_range(-radius..=radius)).collect();
            let xi = (0..xi_len).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            (w, xi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(m: usize) -> Diffusion {
        let mut matrix = vec![0.0; m * m];
        (0..m).for_each(|i| matrix[i * m + i] = 1.0);
        Diffusion::Constant { m, matrix }
    }

    #[test]
    fn degenerate_skt_is_constant() {
        let p = Params::from_pairs(&[("diffusion", "skt"), ("d", "1, 1"), ("alpha", "0,0,0,0")]);
        let spec = build_model(&p).unwrap();
        assert_eq!(spec.diffusion, identity(2));
        assert_eq!(spec.k, 0.0);
    }

    #[test]
    fn js_build_ranges() {
        let ok = Params::from_pairs(&[("diffusion", "js_tensor"), ("kappa", "1"), ("theta", "0.1")]);
        assert!(build_model(&ok).is_ok());
        let bad = Params::from_pairs(&[("diffusion", "js_tensor"), ("kappa", "4"), ("theta", "0.1")]);
        assert!(build_model(&bad).is_err());
    }

    #[test]
    fn unknown_family_is_rejected() {
        let p = Params::from_pairs(&[("diffusion", "mystery")]);
        assert!(matches!(build_model(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn declared_k_must_match() {
        let d = Diffusion::DiagonalPowerLaw { exps: vec![3.0, 3.0] };
        assert!(ModelSpec::with_k(d.clone(), Reaction::None, 2.0).is_ok());
        assert!(ModelSpec::with_k(d, Reaction::None, 1.0).is_err());
    }

    #[test]
    fn scalar_weight_unit_gamma_is_identity() {
        let spec = ModelSpec::new(
            Diffusion::ScalarWeight {
                gamma: Weight::Constant(1.0),
                matrix: vec![1.0, 0.0, 0.0, 1.0],
            },
            Reaction::None,
        )
        .unwrap();
        let a = eval_diffusion(&spec, &[5.0, -3.0], 2);
        assert_eq!(a.values, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn degenerate_power_law_is_zero_at_origin() {
        let spec = ModelSpec::new(Diffusion::DiagonalPowerLaw { exps: vec![2.0, 2.0] }, Reaction::None).unwrap();
        assert!(eval_diffusion(&spec, &[0.0, 0.0], 2).values.iter().all(|v| *v == 0.0));
        let mut samples = random_samples(2, 2, 50, 3.0, 7);
        samples.push((vec![0.0, 0.0], vec![1.0, 0.0]));
        let e = ellipticity_estimate(&spec, &samples, 2).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert!(!e.elliptic);
    }

    #[test]
    fn identity_estimate_is_one() {
        let spec = ModelSpec::new(identity(2), Reaction::None).unwrap();
        let samples = random_samples(2, 4, 200, 10.0, 3);
        let e = ellipticity_estimate(&spec, &samples, 2).unwrap();
        assert!((e.estimate - 1.0).abs() < 1e-14);
    }

    #[test]
    fn js_estimate_at_least_theta() {
        let spec = ModelSpec::new(Diffusion::JsTensor { kappa: 1.0, theta: 0.1 }, Reaction::None).unwrap();
        let samples = random_samples(3, 9, 10_000, 0.55, 11);
        let e = ellipticity_estimate(&spec, &samples, 3).unwrap();
        assert!(e.estimate >= 0.1 - 1e-12, "{}", e.estimate);
    }

    #[test]
    fn empty_samples_error() {
        let spec = ModelSpec::new(identity(1), Reaction::None).unwrap();
        assert!(ellipticity_estimate(&spec, &[], 1).is_err());
    }

    #[test]
    fn linear_matrix_example_via_config() {
        let p = Params::from_pairs(&[
            ("diffusion", "identity"),
            ("m", "2"),
            ("reaction", "linear_matrix"),
            ("g_b", "1, 0"),
            ("g_l", "1, 0"),
        ]);
        let spec = build_model(&p).unwrap();
        p.finish("model").unwrap();
        let g = eval_reaction(&spec, &[1.0, 2.0], None).unwrap();
        assert_eq!(g[0], 3.0);
    }

    #[test]
    fn unconsumed_key_reported_with_line() {
        let p = Params::from_pairs(&[("diffusion", "identity"), ("bogus", "1")]);
        build_model(&p).unwrap();
        assert!(matches!(p.finish("model"), Err(Error::Parse { line: 2, .. })));
    }
}
