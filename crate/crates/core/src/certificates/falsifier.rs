use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{principal_eigenpair, Normalization};
use crate::mesh::{gradient, integrate, Bc, FieldSet, Grid};

/// Interpolation inequalities on the unit cube `B = (0, 1)^N`, each read as
/// `L(W) ≤ ε G(W) + C(ε) R(W)`:
///
/// - `IntIneq0`: `∫|W|² ≤ ε ∫|DW|² + C (∫|W|)²`;
/// - `IntIneqNk`: `∫|W|^{2k+4} ≤ ε (∫|W|^k|DW|²)² + C (∫|W|)^{2k+4}`;
/// - `L1Int`: `∫|W|^{k+2} ≤ ε ∫|W|^k|DW|² + C ∫|W|φ`, with `φ` the principal
///   eigenfunction of `−Div((1 + |W|^k)Dφ)` under Dirichlet conditions,
///   normalized to `‖φ‖_{L¹} = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InequalityId {
    IntIneq0,
    IntIneqNk,
    L1Int,
}

impl InequalityId {
    pub fn parse(s: &str) -> Result<InequalityId> {
        match s.trim() {
            "intineq0" => Ok(InequalityId::IntIneq0),
            "intineqnk" => Ok(InequalityId::IntIneqNk),
            "l1int" | "L1int" => Ok(InequalityId::L1Int),
            other => Err(Error::Config(format!("unknown inequality `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InequalityId::IntIneq0 => "intineq0",
            InequalityId::IntIneqNk => "intineqnk",
            InequalityId::L1Int => "l1int",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    /// `c₀ + Σ_j a_j Π_d cos(π ν_jd x_d + θ_jd)`.
    Trig,
    /// Sum of Gaussian bumps.
    Bump,
    /// Multilinear interpolation of random lattice values.
    PiecewiseLinear,
}

const KINDS: [FieldKind; 3] = [FieldKind::Trig, FieldKind::Bump, FieldKind::PiecewiseLinear];
const TRIG_TERMS: usize = 3;
const BUMPS: usize = 2;
const LATTICE: usize = 3;

/// Test-field generator.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec {
    pub dim: usize,
    /// Cells per axis; draws cycle through these.
    pub resolutions: Vec<usize>,
    /// Largest trigonometric frequency ν (in units of π).
    pub max_mode: f64,
    /// Overall amplitude range.
    pub amplitude: (f64, f64),
}

impl FamilySpec {
    /// Three resolutions per dimension, frequencies up to 4, amplitudes in [0.1, 10].
    pub fn standard(dim: usize) -> FamilySpec {
        let resolutions = match dim {
            1 => vec![32, 64, 128],
            2 => vec![16, 24, 32],
            _ => vec![8, 12, 16],
        };
        FamilySpec {
            dim,
            resolutions,
            max_mode: 4.0,
            amplitude: (0.1, 10.0),
        }
    }

    fn bounds(&self, kind: FieldKind) -> Vec<(f64, f64)> {
        let n = self.dim;
        let mut b = vec![self.amplitude];
        match kind {
            FieldKind::Trig => {
                b.push((-1.0, 1.0));
                for _ in 0..TRIG_TERMS {
                    b.push((-1.0, 1.0));
                    for _ in 0..n {
                        b.push((0.0, self.max_mode));
                        b.push((0.0, 2.0 * PI));
                    }
                }
            }
            FieldKind::Bump => {
                for _ in 0..BUMPS {
                    b.push((-1.0, 1.0));
                    b.push((0.03, 0.5));
                    for _ in 0..n {
                        b.push((0.0, 1.0));
                    }
                }
            }
            FieldKind::PiecewiseLinear => {
                for _ in 0..(LATTICE + 1).pow(n as u32) {
                    b.push((-1.0, 1.0));
                }
            }
        }
        b
    }

    fn eval(&self, kind: FieldKind, p: &[f64], x: &[f64; 3]) -> f64 {
        let n = self.dim;
        let scale = p[0];
        let v = match kind {
            FieldKind::Trig => {
                let mut s = p[1];
                let mut i = 2;
                for _ in 0..TRIG_TERMS {
                    let mut t = p[i];
                    i += 1;
                    for xd in x.iter().take(n) {
                        t *= (PI * p[i] * xd + p[i + 1]).cos();
                        i += 2;
                    }
                    s += t;
                }
                s
            }
            FieldKind::Bump => {
                let mut s = 0.0;
                let mut i = 1;
                for _ in 0..BUMPS {
                    let (a, w) = (p[i], p[i + 1]);
                    i += 2;
                    let mut r2 = 0.0;
                    for xd in x.iter().take(n) {
                        r2 += (xd - p[i]).powi(2);
                        i += 1;
                    }
                    s += a * (-r2 / (2.0 * w * w)).exp();
                }
                s
            }
            FieldKind::PiecewiseLinear => {
                let l = LATTICE as f64;
                let mut base = [0usize; 3];
                let mut frac = [0.0f64; 3];
                for d in 0..n {
                    let t = (x[d] * l).clamp(0.0, l);
                    let i0 = (t.floor() as usize).min(LATTICE - 1);
                    base[d] = i0;
                    frac[d] = t - i0 as f64;
                }
                let mut s = 0.0;
                for corner in 0..(1usize << n) {
                    let mut wgt = 1.0;
                    let mut idx = 0;
                    for d in 0..n {
                        let bit = (corner >> d) & 1;
                        wgt *= if bit == 1 { frac[d] } else { 1.0 - frac[d] };
                        idx = idx * (LATTICE + 1) + base[d] + bit;
                    }
                    s += wgt * p[1 + idx];
                }
                s
            }
        };
        scale * v
    }
}

#[derive(Clone, Debug)]
struct Draw {
    kind: FieldKind,
    res: usize,
    params: Vec<f64>,
}

/// `(L, G, R)` of one field.
type Terms = (f64, f64, f64);

struct Harness<'a> {
    id: InequalityId,
    k: f64,
    family: &'a FamilySpec,
    grids: Vec<Grid>,
}

impl Harness<'_> {
    fn field(&self, d: &Draw) -> FieldSet {
        let g = &self.grids[d.res];
        let dirichlet = self.id == InequalityId::L1Int;
        FieldSet::scalar(g, |x| {
            let v = self.family.eval(d.kind, &d.params, x);
            if dirichlet {
                // vanish on ∂B so the Dirichlet ghosts see a continuous field
                (0..self.family.dim).fold(v, |acc, a| acc * 4.0 * x[a] * (1.0 - x[a]))
            } else {
                v
            }
        })
    }

    fn terms(&self, w: &FieldSet) -> Result<Terms> {
        let g = w.grid();
        let k = self.k;
        let abs: Vec<f64> = w.values().iter().map(|v| v.abs()).collect();
        let dw = gradient(g, w)?;
        let g2 = dw.squared_norm();
        let l1 = integrate(g, &abs);
        let pow = |e: f64| -> Vec<f64> { abs.iter().map(|v| if e == 0.0 { 1.0 } else { v.powf(e) }).collect() };
        Ok(match self.id {
            InequalityId::IntIneq0 => (
                integrate(g, &pow(2.0)),
                integrate(g, &g2),
                l1 * l1,
            ),
            InequalityId::IntIneqNk => {
                let wk = pow(k);
                let dens: Vec<f64> = wk.iter().zip(&g2).map(|(a, b)| a * b).collect();
                let gt = integrate(g, &dens);
                (integrate(g, &pow(2.0 * k + 4.0)), gt * gt, l1.powf(2.0 * k + 4.0))
            }
            InequalityId::L1Int => {
                let wk = pow(k);
                let dens: Vec<f64> = wk.iter().zip(&g2).map(|(a, b)| a * b).collect();
                let gamma: Vec<f64> = wk.iter().map(|v| 1.0 + v).collect();
                let pair = principal_eigenpair(g, &gamma, Normalization::L1)?;
                let wphi: Vec<f64> = abs
                    .iter()
                    .zip(pair.eigenfunction.values())
                    .map(|(a, p)| a * p)
                    .collect();
                (integrate(g, &pow(k + 2.0)), integrate(g, &dens), integrate(g, &wphi))
            }
        })
    }

    fn eval(&self, d: &Draw) -> Result<Terms> {
        self.terms(&self.field(d))
    }

    /// The field `≡ 1` (times the boundary bubble under Dirichlet data).
    fn constant_draw(&self, res: usize) -> Draw {
        let mut params = vec![0.0; self.family.bounds(FieldKind::Trig).len()];
        params[0] = 1.0;
        params[1] = 1.0;
        Draw {
            kind: FieldKind::Trig,
            res,
            params,
        }
    }

    fn random_draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Draw {
        let kind = KINDS[n % KINDS.len()];
        let res = (n / KINDS.len()) % self.grids.len();
        let params = self
            .family
            .bounds(kind)
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo..=*hi))
            .collect();
        Draw { kind, res, params }
    }
}

fn needed(t: &Terms, eps: f64) -> Option<f64> {
    let (l, g, r) = *t;
    if r > 0.0 {
        Some((l - eps * g) / r)
    } else {
        None
    }
}

/// A fresh draw that beats the fitted constant.
#[derive(Clone, Debug)]
pub struct Violation {
    pub eps: f64,
    /// `L − (εG + C R)` relative to `max(L, εG + C R)`.
    pub excess: f64,
    pub field: FieldSet,
}

#[derive(Clone, Debug)]
pub struct InequalityFitResult {
    pub id: InequalityId,
    pub k: f64,
    pub dim: usize,
    pub eps: Vec<f64>,
    /// Fitted `C(ε)`, one per entry of `eps`.
    pub constants: Vec<f64>,
    /// Fresh-draw violations per ε.
    pub violations: Vec<usize>,
    pub counterexample: Option<Violation>,
    pub trials: usize,
}

const CLIMB_STARTS_PER_KIND: usize = 2;
const CLIMB_ITERS: usize = 120;
const MARGIN: f64 = 1e-9;

/// Fits the smallest `C(ε)` over `trials` training draws plus the constant
/// field on every resolution, sharpened by a hill climb from the worst draws
/// of each kind, then counts `trials` fresh draws that violate the fitted
/// constant by more than 1e−9 relative.
///
/// Training and climbed candidates are pooled across ε, so the fitted `C(ε)`
/// is non-increasing in ε.
pub fn inequality_falsifier(
    id: InequalityId,
    k: f64,
    eps: &[f64],
    family: &FamilySpec,
    trials: usize,
    seed: u64,
) -> Result<InequalityFitResult> {
    if trials == 0 {
        return Err(Error::Precondition("falsifier needs at least one trial".into()));
    }
    if !(1..=3).contains(&family.dim) {
        return Err(Error::Precondition(format!("dimension {} must be 1, 2 or 3", family.dim)));
    }
    if !(k >= 0.0) {
        return Err(Error::Precondition(format!("k = {k} must be ≥ 0")));
    }
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Precondition("ε values must be positive".into()));
    }
    if family.resolutions.is_empty() || family.resolutions.iter().any(|r| *r < 2) {
        return Err(Error::Config("family needs resolutions ≥ 2".into()));
    }
    let bc = if id == InequalityId::L1Int { Bc::DirichletZero } else { Bc::NeumannZero };
    let grids = family
        .resolutions
        .iter()
        .map(|&r| Grid::boxed(&vec![1.0; family.dim], &vec![r; family.dim], bc))
        .collect::<Result<Vec<_>>>()?;
    let h = Harness { id, k, family, grids };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train: Vec<Draw> = (0..trials).map(|n| h.random_draw(&mut rng, n)).collect();
    train.extend((0..h.grids.len()).map(|r| h.constant_draw(r)));
    let train_terms: Vec<Terms> = train.par_iter().map(|d| h.eval(d)).collect::<Result<_>>()?;
    if train_terms.iter().all(|t| !(t.2 > 0.0)) {
        return Err(Error::Precondition("test family is degenerate (all fields vanish)".into()));
    }

    // hill-climb starts: worst draws of each kind for each ε
    let mut starts: Vec<(usize, f64)> = Vec::new();
    for &e in eps {
        for kind in KINDS {
            let mut idx: Vec<(f64, usize)> = train_terms
                .iter()
                .enumerate()
                .filter(|(i, _)| train[*i].kind == kind)
                .filter_map(|(i, t)| needed(t, e).map(|c| (c, i)))
                .collect();
            idx.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, i) in idx.into_iter().take(CLIMB_STARTS_PER_KIND) {
                starts.push((i, e));
            }
        }
    }
    let jobs: Vec<(usize, f64, u64)> = starts
        .iter()
        .enumerate()
        .map(|(j, &(i, e))| (i, e, seed ^ (j as u64 + 1).wrapping_mul(0x5851_f42d)))
        .collect();
    let climbed: Vec<Terms> = jobs
        .par_iter()
        .map(|&(i, e, s)| climb(&h, &train[i], train_terms[i], e, s))
        .collect::<Result<_>>()?;

    let pool: Vec<&Terms> = train_terms.iter().chain(climbed.iter()).collect();
    let constants: Vec<f64> = eps
        .iter()
        .map(|&e| pool.iter().filter_map(|t| needed(t, e)).fold(0.0f64, f64::max))
        .collect();

    let mut fresh_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x2545_f491_4f6c_dd1d));
    let fresh: Vec<Draw> = (0..trials).map(|n| h.random_draw(&mut fresh_rng, n)).collect();
    let fresh_terms: Vec<Terms> = fresh.par_iter().map(|d| h.eval(d)).collect::<Result<_>>()?;
    let mut violations = vec![0usize; eps.len()];
    let mut counterexample: Option<Violation> = None;
    for (d, t) in fresh.iter().zip(&fresh_terms) {
        for (j, &e) in eps.iter().enumerate() {
            let (l, g, r) = *t;
            let bound = e * g + constants[j] * r;
            let scale = l.max(bound);
            if scale > 0.0 && l - bound > MARGIN * scale {
                violations[j] += 1;
                if counterexample.is_none() {
                    counterexample = Some(Violation {
                        eps: e,
                        excess: (l - bound) / scale,
                        field: h.field(d),
                    });
                }
            }
        }
    }
    Ok(InequalityFitResult {
        id,
        k,
        dim: family.dim,
        eps: eps.to_vec(),
        constants,
        violations,
        counterexample,
        trials,
    })
}

/// Random-perturbation ascent on `needed(·, ε)` within the parameter box.
fn climb(h: &Harness, start: &Draw, start_terms: Terms, eps: f64, seed: u64) -> Result<Terms> {
    let bounds = h.family.bounds(start.kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = start.clone();
    let mut best_terms = start_terms;
    let mut best_val = needed(&best_terms, eps).unwrap_or(f64::NEG_INFINITY);
    for it in 0..CLIMB_ITERS {
        let step = 0.2 * (1.0 - it as f64 / CLIMB_ITERS as f64) + 0.005;
        let mut cand = best.clone();
        for (p, (lo, hi)) in cand.params.iter_mut().zip(&bounds) {
            if rng.gen_bool(0.5) {
                *p = (*p + step * (hi - lo) * rng.gen_range(-1.0..=1.0)).clamp(*lo, *hi);
            }
        }
        let t = h.eval(&cand)?;
        if let Some(v) = needed(&t, eps) {
            if v > best_val {
                best_val = v;
                best = cand;
                best_terms = t;
            }
        }
    }
    Ok(best_terms)
}
