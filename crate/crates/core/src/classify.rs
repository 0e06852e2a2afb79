//! Verdicts from the signs and exponents of the fitted branches.

use std::fmt;

use num_traits::One;
use thiserror::Error;

use crate::branchtrack::Branch;
use crate::polynomial::{rat_to_f64, Rational};

/// Fraction of `a_*` used for the growth certificate.
pub const CERTIFICATE_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    NotLocalMin,
    LocalMinNonisolated,
    IsolatedLocalMin,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::NotLocalMin => "NOT_LOCAL_MIN",
            Verdict::LocalMinNonisolated => "LOCAL_MIN_NONISOLATED",
            Verdict::IsolatedLocalMin => "ISOLATED_LOCAL_MIN",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        [
            Verdict::NotLocalMin,
            Verdict::LocalMinNonisolated,
            Verdict::IsolatedLocalMin,
            Verdict::Inconclusive,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow {
    pub id: usize,
    pub alpha: Option<Rational>,
    pub a: Option<f64>,
    pub a_sign: i8,
    pub constant: bool,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// `f(x) - f(x̄) >= c·|x - x̄|^α_*` is claimed for `|x - x̄| <= epsilon`.
    pub c: f64,
    pub epsilon: f64,
    /// Outcome of the sampled check, once it has run.
    pub verified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub alpha_star: Option<Rational>,
    pub a_star: Option<f64>,
    pub lojasiewicz_exponent: Option<f64>,
    pub subregularity_order: Option<Rational>,
    pub certificate: Option<Certificate>,
    pub trust_radius: f64,
    pub branch_table: Vec<BranchRow>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("sharp order is defined only for isolated minimizers, verdict is {0}")]
    WrongVerdict(Verdict),
}

fn row(b: &Branch) -> BranchRow {
    BranchRow {
        id: b.id,
        alpha: b.alpha().cloned(),
        a: b.a(),
        a_sign: b.a_sign(),
        constant: matches!(&b.fit, Some(Ok(f)) if f.constant),
        certified: b.is_certified(),
    }
}

pub fn classify(branches: &[Branch], trust_radius: f64) -> ClassificationReport {
    let table: Vec<BranchRow> = branches.iter().map(row).collect();
    let mut report = ClassificationReport {
        verdict: Verdict::Inconclusive,
        alpha_star: None,
        a_star: None,
        lojasiewicz_exponent: None,
        subregularity_order: None,
        certificate: None,
        trust_radius,
        branch_table: Vec::new(),
        reasons: Vec::new(),
    };

    let negative: Vec<usize> = table
        .iter()
        .filter(|r| r.a_sign < 0)
        .map(|r| r.id)
        .collect();
    let uncertain: Vec<usize> = table
        .iter()
        .filter(|r| !r.certified)
        .map(|r| r.id)
        .collect();
    if !negative.is_empty() {
        report.verdict = Verdict::NotLocalMin;
        report
            .reasons
            .push(format!("branches {negative:?} descend below f(x̄)"));
    } else if table.is_empty() {
        report.reasons.push("no branches were traced".into());
    } else if !uncertain.is_empty() {
        report.reasons.push(format!(
            "branches {uncertain:?} have no certified sign or exponent"
        ));
    } else if table.iter().any(|r| r.constant) {
        report.verdict = Verdict::LocalMinNonisolated;
        report.reasons.push("some branches stay at f(x̄)".into());
    } else {
        report.verdict = Verdict::IsolatedLocalMin;
        let alpha_star = table
            .iter()
            .filter_map(|r| r.alpha.clone())
            .max()
            .expect("nonconstant branches");
        let a_star = table
            .iter()
            .filter(|r| r.alpha.as_ref() == Some(&alpha_star))
            .filter_map(|r| r.a)
            .fold(f64::INFINITY, f64::min);
        let af = rat_to_f64(&alpha_star);
        report.lojasiewicz_exponent = Some(1.0 - 1.0 / af);
        report.subregularity_order = Some(&alpha_star - Rational::one());
        report.certificate = Some(Certificate {
            c: CERTIFICATE_FRACTION * a_star,
            epsilon: trust_radius,
            verified: None,
        });
        report.alpha_star = Some(alpha_star);
        report.a_star = Some(a_star);
    }
    report.branch_table = table;
    report
}

/// Whether `x̄` is a sharp minimizer of order `alpha`.
pub fn sharp_order_test(
    report: &ClassificationReport,
    alpha: &Rational,
) -> Result<bool, ClassifyError> {
    match (&report.verdict, &report.alpha_star) {
        (Verdict::IsolatedLocalMin, Some(star)) => Ok(alpha >= star),
        (v, _) => Err(ClassifyError::WrongVerdict(*v)),
    }
}
