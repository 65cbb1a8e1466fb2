//! Sampled checks of blow-up sufficient conditions, the horizon bound, the
//! κ-condition infimum and an empirical falsifier for interpolation
//! inequalities.
//!
//! Every pointwise hypothesis is checked on finitely many samples, so a pass
//! means "no violation found", never a proof.

mod falsifier;
mod kappa;
mod scalar;
mod system;

pub use falsifier::{
    inequality_falsifier, FamilySpec, FieldKind, InequalityFitResult, InequalityId, Violation,
};
pub use kappa::{aligned_samples, kappa_infimum, KappaEstimate, Sampler};
pub use scalar::{convection_certificate, diagonal_certificate, scalar_certificate, ScalarMaps};
pub use system::system_certificate;

use crate::error::{Error, Result};

/// One checked hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCheck {
    pub name: String,
    pub pass: bool,
    /// State at which the residual is worst.
    pub worst_sample: Vec<f64>,
    /// Worst signed margin; the sign convention is per check and documented
    /// with the certificate that produces it.
    pub residual: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    BlowupCertified,
    ConditionsFailed(Vec<String>),
    InitialDataInsufficient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub checks: Vec<ConditionCheck>,
    pub phi0: f64,
    pub psi0: f64,
    pub c: f64,
    pub horizon: Option<f64>,
    pub verdict: Verdict,
    /// Set when samples avoided a neighbourhood of 0.
    pub conditional: bool,
}

impl CertificateReport {
    pub(crate) fn assemble(checks: Vec<ConditionCheck>, phi0: f64, psi0: f64, c: f64, conditional: bool) -> Result<Self> {
        let failed: Vec<String> = checks.iter().filter(|k| !k.pass).map(|k| k.name.clone()).collect();
        let (verdict, horizon) = if !failed.is_empty() {
            (Verdict::ConditionsFailed(failed), None)
        } else if !(phi0 > 0.0) || !(psi0 > 0.0) {
            (Verdict::InitialDataInsufficient, None)
        } else {
            (Verdict::BlowupCertified, Some(blowup_horizon(phi0, psi0, c)?))
        };
        Ok(CertificateReport {
            checks,
            phi0,
            psi0,
            c,
            horizon,
            verdict,
            conditional,
        })
    }

    pub fn verdict_label(&self) -> &'static str {
        match self.verdict {
            Verdict::BlowupCertified => "BlowupCertified",
            Verdict::ConditionsFailed(_) => "ConditionsFailed",
            Verdict::InitialDataInsufficient => "InitialDataInsufficient",
        }
    }

    /// Plain-text block followed by a `key = value` section.
    pub fn render(&self) -> String {
        let mut s = String::from("certificate\n");
        for k in &self.checks {
            let sample: Vec<String> = k.worst_sample.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!(
                "  {:<28} {}  residual {:e}  worst at [{}]  ({} samples, {})\n",
                k.name,
                if k.pass { "pass" } else { "FAIL" },
                k.residual,
                sample.join(", "),
                k.samples,
                if k.pass { "no violation found" } else { "violated" },
            ));
        }
        if self.conditional {
            s.push_str("  note: samples exclude a neighbourhood of 0; certification is conditional\n");
        }
        s.push_str(&format!("  verdict: {}\n", self.verdict_label()));
        s.push_str("\n[certificate]\n");
        s.push_str(&format!("verdict = {}\n", self.verdict_label()));
        s.push_str(&format!("phi0 = {}\n", self.phi0));
        s.push_str(&format!("psi0 = {}\n", self.psi0));
        s.push_str(&format!("c = {}\n", self.c));
        match self.horizon {
            Some(h) => s.push_str(&format!("horizon = {h}\n")),
            None => s.push_str("horizon = none\n"),
        }
        s.push_str(&format!("conditional = {}\n", self.conditional));
        for k in &self.checks {
            s.push_str(&format!("check.{} = {}\n", k.name, if k.pass { "pass" } else { "fail" }));
        }
        s
    }
}

/// `φ(0) / ((c − 1) ψ(0))`.
pub fn blowup_horizon(phi0: f64, psi0: f64, c: f64) -> Result<f64> {
    if !(phi0 > 0.0) || !(psi0 > 0.0) {
        return Err(Error::Precondition(format!(
            "horizon needs φ(0) > 0 and ψ(0) > 0, got {phi0}, {psi0}"
        )));
    }
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::Precondition(format!("horizon needs c > 1, got {c}")));
    }
    Ok(phi0 / ((c - 1.0) * psi0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_arithmetic() {
        assert_eq!(blowup_horizon(1.0, 1.0, 2.0).unwrap(), 1.0);
        assert!((blowup_horizon(2.0, 0.5, 4.0 / 3.0).unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn horizon_guards() {
        assert!(blowup_horizon(1.0, 1.0, 1.0).is_err());
        assert!(blowup_horizon(0.0, 1.0, 2.0).is_err());
        assert!(blowup_horizon(1.0, -1.0, 2.0).is_err());
    }

    #[test]
    fn horizon_decreases_in_psi() {
        let a = blowup_horizon(1.0, 1.0, 1.5).unwrap();
        let b = blowup_horizon(1.0, 1.1, 1.5).unwrap();
        assert!(b < a);
    }
}
