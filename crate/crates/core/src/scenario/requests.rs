use super::{at_section, join, Document, Section};
use crate::certificates::{
    aligned_samples, convection_certificate, diagonal_certificate, inequality_falsifier, kappa_infimum,
    system_certificate, FamilySpec, InequalityId, Sampler, ScalarMaps,
};
use crate::error::{Error, Result};
use crate::exact::{exact_by_name, residual_study, ExactSolution, ResidualTable};
use crate::mesh::{FieldSet, Grid};
use crate::models::{ModelSpec, Params};

/// What a `[certificate]` section asks for.
#[derive(Clone, Debug, PartialEq)]
pub enum CertificateKind {
    /// Diagonal power-law pair `a = |u|^{m₀−1}u`, `b = β|u|^p u` applied to
    /// every component; convection and `γ > 1` switch on the convective form.
    Diagonal {
        m0: f64,
        beta: f64,
        p: f64,
        gamma: f64,
        k: f64,
        convection: Vec<f64>,
        samples: usize,
    },
    /// Vector certificate on the model's potential map and reaction.
    System { kappa: f64, sampler: Sampler },
    /// `κ̂` of the model's potential map.
    Kappa { sampler: Sampler, aligned: bool, offset: f64 },
    Falsifier {
        id: InequalityId,
        k: f64,
        dim: usize,
        eps: Vec<f64>,
        trials: usize,
    },
}

impl CertificateKind {
    pub(crate) fn needs_initial(&self) -> bool {
        matches!(self, CertificateKind::Diagonal { .. } | CertificateKind::System { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateRequest {
    pub label: String,
    pub kind: CertificateKind,
    /// Falls back to the scenario seed.
    pub seed: Option<u64>,
    scalar_alias: bool,
}

/// Rendered result of one certificate request.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateOutcome {
    pub label: String,
    pub text: String,
    pub csv: Option<String>,
    pub verdict: String,
    pub horizon: Option<f64>,
}

fn sampler_from(p: &Params, default_count: usize) -> Result<Sampler> {
    let d = Sampler::default();
    let s = Sampler {
        count: p.usize("samples")?.unwrap_or(default_count),
        seed: 0,
        lo: p.f64_or("lo", d.lo)?,
        hi: p.f64_or("hi", d.hi)?,
        nonnegative: bool_key(p, "nonnegative", false)?,
        exclude_radius: p.f64_or("exclude_radius", 0.0)?,
    };
    s.validate().map_err(|e| Error::Parse { line: p.line_of("hi"), msg: e.to_string() })?;
    Ok(s)
}

fn bool_key(p: &Params, key: &str, default: bool) -> Result<bool> {
    match p.str(key).map(str::trim) {
        None => Ok(default),
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(other) => Err(Error::Parse {
            line: p.line_of(key),
            msg: format!("`{key}` must be true or false, got `{other}`"),
        }),
    }
}

fn sampler_entries(s: &Sampler, out: &mut Vec<(String, String)>) {
    out.push(("samples".into(), s.count.to_string()));
    out.push(("lo".into(), s.lo.to_string()));
    out.push(("hi".into(), s.hi.to_string()));
    out.push(("nonnegative".into(), s.nonnegative.to_string()));
    out.push(("exclude_radius".into(), s.exclude_radius.to_string()));
}

impl CertificateRequest {
    pub(crate) fn parse(sec: &Section, model: Option<&ModelSpec>) -> Result<CertificateRequest> {
        let p = Document::params(sec, &[])?;
        let label = sec.name.strip_prefix("certificate.").unwrap_or("0").to_string();
        let need_potential = |line: usize| -> Result<()> {
            match model {
                Some(m) if m.potential().is_some() => Ok(()),
                _ => Err(Error::Parse {
                    line,
                    msg: "this certificate needs a [model] whose diffusion has a potential map".into(),
                }),
            }
        };
        let req = at_section(sec, (|| {
            let kind_text = p.req_str("kind")?.trim().to_string();
            let kind = match kind_text.as_str() {
                "scalar" | "diagonal" => {
                    let gamma = p.f64_or("gamma", 1.0)?;
                    let k = p.req_f64("k")?;
                    if !(k > 0.0 && k < 2f64.sqrt()) {
                        return Err(Error::Parse {
                            line: p.line_of("k"),
                            msg: format!("k = {k} must lie in (0, √2)"),
                        });
                    }
                    let convection = p.vec("convection")?.unwrap_or_default();
                    if convection.iter().any(|c| *c != 0.0) && !(gamma > 1.0) {
                        return Err(Error::Parse {
                            line: p.line_of("gamma"),
                            msg: "convection needs gamma > 1".into(),
                        });
                    }
                    CertificateKind::Diagonal {
                        m0: p.req_f64("m0")?,
                        beta: p.f64_or("beta", 1.0)?,
                        p: p.req_f64("p")?,
                        gamma,
                        k,
                        convection,
                        samples: p.usize("samples")?.unwrap_or(10_000),
                    }
                }
                "system" => {
                    need_potential(p.line_of("kind"))?;
                    let kappa = p.req_f64("kappa")?;
                    if !(kappa > 0.0 && kappa < 0.5) {
                        return Err(Error::Parse {
                            line: p.line_of("kappa"),
                            msg: format!("kappa = {kappa} must lie in (0, 1/2)"),
                        });
                    }
                    CertificateKind::System { kappa, sampler: sampler_from(&p, 10_000)? }
                }
                "kappa" => {
                    need_potential(p.line_of("kind"))?;
                    CertificateKind::Kappa {
                        sampler: sampler_from(&p, 100_000)?,
                        aligned: bool_key(&p, "aligned", true)?,
                        offset: p.f64_or("offset", 0.0)?,
                    }
                }
                "falsifier" => {
                    let id = InequalityId::parse(p.req_str("inequality")?)
                        .map_err(|e| Error::Parse { line: p.line_of("inequality"), msg: e.to_string() })?;
                    let dim = p.usize("dim")?.unwrap_or(1);
                    if !(1..=3).contains(&dim) {
                        return Err(Error::Parse { line: p.line_of("dim"), msg: "`dim` must be 1, 2 or 3".into() });
                    }
                    let eps = p.vec("eps")?.unwrap_or_else(|| vec![1.0, 0.1, 0.01]);
                    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
                        return Err(Error::Parse { line: p.line_of("eps"), msg: "`eps` values must be positive".into() });
                    }
                    CertificateKind::Falsifier {
                        id,
                        k: p.f64_or("k", 0.0)?,
                        dim,
                        eps,
                        trials: p.usize("trials")?.unwrap_or(1000).max(1),
                    }
                }
                other => {
                    return Err(Error::Parse {
                        line: p.line_of("kind"),
                        msg: format!("unknown certificate kind `{other}`"),
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
            Ok(CertificateRequest {
                label: label.clone(),
                kind,
                seed,
                scalar_alias: kind_text == "scalar",
            })
        })())?;
        p.finish(&sec.name)?;
        Ok(req)
    }

    pub(crate) fn section_name(&self) -> String {
        if self.label == "0" {
            "certificate".into()
        } else {
            format!("certificate.{}", self.label)
        }
    }

    pub(crate) fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = Vec::new();
        match &self.kind {
            CertificateKind::Diagonal {
                m0,
                beta,
                p,
                gamma,
                k,
                convection,
                samples,
            } => {
                e.push(("kind".into(), if self.scalar_alias { "scalar" } else { "diagonal" }.into()));
                e.push(("m0".into(), m0.to_string()));
                e.push(("beta".into(), beta.to_string()));
                e.push(("p".into(), p.to_string()));
                e.push(("gamma".into(), gamma.to_string()));
                e.push(("k".into(), k.to_string()));
                if !convection.is_empty() {
                    e.push(("convection".into(), join(convection)));
                }
                e.push(("samples".into(), samples.to_string()));
            }
            CertificateKind::System { kappa, sampler } => {
                e.push(("kind".into(), "system".into()));
                e.push(("kappa".into(), kappa.to_string()));
                sampler_entries(sampler, &mut e);
            }
            CertificateKind::Kappa { sampler, aligned, offset } => {
                e.push(("kind".into(), "kappa".into()));
                sampler_entries(sampler, &mut e);
                e.push(("aligned".into(), aligned.to_string()));
                e.push(("offset".into(), offset.to_string()));
            }
            CertificateKind::Falsifier { id, k, dim, eps, trials } => {
                e.push(("kind".into(), "falsifier".into()));
                e.push(("inequality".into(), id.name().into()));
                e.push(("k".into(), k.to_string()));
                e.push(("dim".into(), dim.to_string()));
                e.push(("eps".into(), join(eps)));
                e.push(("trials".into(), trials.to_string()));
            }
        }
        if let Some(s) = self.seed {
            e.push(("seed".into(), s.to_string()));
        }
        e
    }

    /// Evaluates the request on `u0` (when needed).
    pub fn evaluate(&self, model: Option<&ModelSpec>, u0: Option<&FieldSet>, scenario_seed: u64) -> Result<CertificateOutcome> {
        let seed = self.seed.unwrap_or(scenario_seed);
        let need_u0 = || u0.ok_or_else(|| Error::Config("certificate needs initial data".into()));
        let need_map = || {
            model
                .and_then(|m| m.potential())
                .ok_or(Error::MissingPotential)
        };
        match &self.kind {
            CertificateKind::Diagonal {
                m0,
                beta,
                p,
                gamma,
                k,
                convection,
                samples,
            } => {
                let u0 = need_u0()?;
                let maps = vec![ScalarMaps::power(*m0, *beta, *p, *gamma); u0.m()];
                let rep = if convection.iter().any(|c| *c != 0.0) {
                    convection_certificate(&maps, convection, *gamma, *k, u0, *samples, seed)?
                } else {
                    diagonal_certificate(&maps, *k, *gamma, &[], u0, *samples, seed)?
                };
                Ok(CertificateOutcome {
                    label: self.label.clone(),
                    text: rep.render(),
                    csv: None,
                    verdict: rep.verdict_label().into(),
                    horizon: rep.horizon,
                })
            }
            CertificateKind::System { kappa, sampler } => {
                let u0 = need_u0()?;
                let map = need_map()?;
                let reaction = &model.expect("checked by need_map").reaction;
                let s = Sampler { seed, ..sampler.clone() };
                let rep = system_certificate(&map, reaction, *kappa, u0, &s)?;
                Ok(CertificateOutcome {
                    label: self.label.clone(),
                    text: rep.render(),
                    csv: None,
                    verdict: rep.verdict_label().into(),
                    horizon: rep.horizon,
                })
            }
            CertificateKind::Kappa { sampler, aligned, offset } => {
                let map = need_map()?;
                let s = Sampler { seed, ..sampler.clone() };
                let mut pairs = s.draw(map.m());
                if *aligned {
                    pairs.extend(aligned_samples(&map, &s.states(map.m())));
                }
                let est = kappa_infimum(&map, &pairs, *offset)?;
                let text = format!(
                    "kappa estimate\n  kappa_hat {}  ({} samples)\n  worst at u = {:?}, xi = {:?}\n\n[kappa]\nkappa_hat = {}\nsamples = {}\nbelow_half = {}\n",
                    est.kappa,
                    est.used,
                    est.worst_u,
                    est.worst_xi,
                    est.kappa,
                    est.used,
                    est.kappa < 0.5
                );
                Ok(CertificateOutcome {
                    label: self.label.clone(),
                    text,
                    csv: None,
                    verdict: if est.kappa < 0.5 { "KappaBelowHalf" } else { "KappaAtLeastHalf" }.into(),
                    horizon: None,
                })
            }
            CertificateKind::Falsifier { id, k, dim, eps, trials } => {
                let fit = inequality_falsifier(*id, *k, eps, &FamilySpec::standard(*dim), *trials, seed)?;
                let mut text = format!(
                    "inequality falsifier: {} (k = {k}, N = {dim}, {trials} draws)\n",
                    id.name()
                );
                let mut csv = String::from("eps,constant,violations\n");
                for ((e, c), v) in fit.eps.iter().zip(&fit.constants).zip(&fit.violations) {
                    text.push_str(&format!("  eps {e:<8} C {c:<24e} violations {v}\n"));
                    csv.push_str(&format!("{e},{c:e},{v}\n"));
                }
                let total: usize = fit.violations.iter().sum();
                text.push_str(&format!("\n[falsifier]\ninequality = {}\nviolations = {total}\n", id.name()));
                Ok(CertificateOutcome {
                    label: self.label.clone(),
                    text,
                    csv: Some(csv),
                    verdict: if total == 0 { "NoViolationFound" } else { "Violated" }.into(),
                    horizon: None,
                })
            }
        }
    }
}

/// What an `[exact]` section asks for.
#[derive(Clone, Debug)]
pub struct ExactRequest {
    pub solution: ExactSolution,
    pub times: Vec<f64>,
    /// Cells per axis of each grid; empty means the scenario grid only.
    pub grids: Vec<usize>,
    entries: Vec<(String, String)>,
}

impl ExactRequest {
    pub(crate) fn parse(sec: &Section, model: &ModelSpec, grid: &Grid) -> Result<ExactRequest> {
        let p = Document::params(sec, &[])?;
        let req = at_section(sec, (|| {
            let name = p.req_str("solution")?.trim().to_string();
            let solution = exact_by_name(&name, &p).map_err(|e| Error::Parse {
                line: p.line_of("solution"),
                msg: e.to_string(),
            })?;
            if solution.m != model.m() {
                return Err(Error::Parse {
                    line: p.line_of("solution"),
                    msg: format!("solution has {} components, model has {}", solution.m, model.m()),
                });
            }
            let times = p.req_vec("times")?;
            if let Some(t) = times.iter().find(|t| solution.check_time(**t).is_err()) {
                return Err(Error::Parse {
                    line: p.line_of("times"),
                    msg: format!("time {t} lies outside the validity window of `{name}`"),
                });
            }
            let grids = p.usize_vec("grids")?.unwrap_or_default();
            if grids.iter().any(|n| *n < 2) {
                return Err(Error::Parse { line: p.line_of("grids"), msg: "grid resolutions must be ≥ 2".into() });
            }
            model.diffusion.validate(Some(grid.dim())).map_err(|e| Error::Parse {
                line: sec.line,
                msg: e.to_string(),
            })?;
            let entries = sec.entries.iter().map(|e| (e.key.clone(), e.value.clone())).collect();
            Ok(ExactRequest { solution, times, grids, entries })
        })())?;
        p.finish("exact")?;
        Ok(req)
    }

    pub(crate) fn entries(&self) -> Vec<(String, String)> {
        self.entries.clone()
    }

    /// Grids of the study: the scenario grid refined to each resolution.
    pub fn study_grids(&self, grid: &Grid) -> Result<Vec<Grid>> {
        if self.grids.is_empty() {
            return Ok(vec![grid.clone()]);
        }
        self.grids
            .iter()
            .map(|&n| Grid::new(grid.origin(), grid.extent(), &vec![n; grid.dim()], grid.bcs()))
            .collect()
    }

    pub fn evaluate(&self, model: &ModelSpec, grid: &Grid) -> Result<ResidualTable> {
        residual_study(model, &self.solution, &self.study_grids(grid)?, &self.times)
    }
}
