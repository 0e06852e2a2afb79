//! End-to-end runs, the structured report, and its canonical text forms.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::branchtrack::{build_ladder, trace_with_retry, LadderError, RadiusLadder, Trace};
use crate::classify::{classify, ClassificationReport, Verdict};
use crate::expansion::FitResult;
use crate::oracle::{fit_psi, psi_consistency};
use crate::polynomial::{rat_to_f64, Rational};
use crate::tangency::{tangency_polynomial, FunctionModel, ModelKind, TangencyError};
use crate::verify::{counterexample_probe, probe, InequalityProbe, ProbeName, VerifyError};

pub const SCHEMA_VERSION: u32 = 1;
/// Largest trend slope of the subregularity and gradient probes at `α_*` accepted without a warning.
pub const SLOPE_BAND: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] TangencyError),
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report format: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub function_text: String,
    pub model_kind: ModelKind,
    pub center: [Rational; 2],
    pub t0: Rational,
    pub rho: Rational,
    pub rungs: usize,
    pub qmax: u32,
    pub grid: usize,
    pub per_rung: usize,
    pub verify_alphas: Vec<f64>,
    pub counterexample: bool,
    pub seed: u64,
    pub timings: bool,
}

impl RunConfig {
    pub fn new(model_kind: ModelKind, function_text: &str) -> Self {
        let r = |n: i64, d: i64| Rational::new(n.into(), d.into());
        RunConfig {
            function_text: function_text.to_string(),
            model_kind,
            center: [r(0, 1), r(0, 1)],
            t0: r(1, 8),
            rho: r(1, 2),
            rungs: 24,
            qmax: 12,
            grid: 4096,
            per_rung: 512,
            verify_alphas: Vec::new(),
            counterexample: false,
            seed: 0,
            timings: false,
        }
    }

    pub fn smooth(text: &str) -> Self {
        Self::new(ModelKind::Smooth, text)
    }

    pub fn abs(text: &str) -> Self {
        Self::new(ModelKind::AbsOfPoly, text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub function: String,
    pub model: String,
    pub center: [String; 2],
    pub t0: String,
    pub rho: String,
    pub rungs: usize,
    pub qmax: u32,
    pub grid: usize,
    pub per_rung: usize,
    pub verify_alphas: Vec<f64>,
    pub counterexample: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderEcho {
    pub t0: String,
    pub rho: String,
    pub rungs: usize,
    /// First rung of the stabilized window.
    pub start: usize,
    pub counts: Vec<Option<usize>>,
    pub ladder_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPointEcho {
    pub t: f64,
    pub theta: f64,
    pub f_value: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEcho {
    pub id: usize,
    pub constant: bool,
    pub on_zero_set: bool,
    pub alpha: Option<String>,
    pub alpha_raw: Option<f64>,
    pub a: Option<f64>,
    pub a_sign: i8,
    pub certified: bool,
    pub residual: Option<f64>,
    pub fit_error: Option<String>,
    pub limit_theta: f64,
    pub points: Vec<BranchPointEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEcho {
    pub c: f64,
    pub epsilon: f64,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEcho {
    pub verdict: String,
    pub alpha_star: Option<String>,
    pub a_star: Option<f64>,
    pub lojasiewicz_exponent: Option<f64>,
    pub subregularity_order: Option<String>,
    pub certificate: Option<CertificateEcho>,
    pub trust_radius: f64,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiEcho {
    pub t: f64,
    pub psi: f64,
    pub delta: f64,
    pub argmin_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEcho {
    pub samples: Vec<PsiEcho>,
    pub alpha: Option<String>,
    pub alpha_raw: Option<f64>,
    pub a: Option<f64>,
    pub constant: Option<bool>,
    pub fit_error: Option<String>,
    pub consistent: bool,
    pub max_rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEcho {
    pub name: String,
    pub alpha: Option<f64>,
    pub inf_ratio: Option<f64>,
    pub trend_slope: Option<f64>,
    pub trend_slope_last8: Option<f64>,
    pub samples: usize,
    pub excluded: usize,
    /// `[t, inf ratio]` per rung.
    pub per_rung: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleEcho {
    /// `[t, m_f, dist, ratio]` along the path `x̄ + (0, t)`.
    pub rows: Vec<[f64; 4]>,
    pub excluded: usize,
    pub quadratic_growth_inf: Option<f64>,
    pub growth_radius: f64,
    pub growth_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub config: ConfigEcho,
    pub tangency_polynomial: String,
    pub value_at_center: String,
    pub ladder: LadderEcho,
    pub branches: Vec<BranchEcho>,
    pub classification: ClassificationEcho,
    pub oracle: Option<OracleEcho>,
    pub probes: Vec<ProbeEcho>,
    pub counterexample: Option<CounterexampleEcho>,
    pub trust_radius: f64,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl AnalysisReport {
    pub fn verdict(&self) -> Verdict {
        Verdict::parse(&self.classification.verdict).unwrap_or(Verdict::Inconclusive)
    }

    /// 0 for a certified verdict, 2 for INCONCLUSIVE.
    pub fn exit_code(&self) -> i32 {
        if self.verdict() == Verdict::Inconclusive {
            2
        } else {
            0
        }
    }

    pub fn probe(&self, name: ProbeName, alpha: Option<f64>) -> Option<&ProbeEcho> {
        self.probes
            .iter()
            .find(|p| p.name == name.as_str() && p.alpha == alpha)
    }

    /// Sorted keys, 17 significant digits, two-space indentation.
    pub fn to_canonical_json(&self) -> Result<String, RunError> {
        let value = serde_json::to_value(self)?;
        let mut out = String::new();
        write_value(&value, 0, &mut out);
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&v.to_string()),
        Value::Number(n) => match (n.as_i64(), n.as_u64(), n.as_f64()) {
            (Some(i), _, _) if !n.is_f64() => out.push_str(&i.to_string()),
            (_, Some(u), _) if !n.is_f64() => out.push_str(&u.to_string()),
            (_, _, Some(f)) if f.is_finite() => out.push_str(&format_f64(f)),
            _ => out.push_str("null"),
        },
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_value(item, depth + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(&map[*k], depth + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
}

fn model_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Smooth => "smooth",
        ModelKind::AbsOfPoly => "abs",
    }
}

fn echo_config(c: &RunConfig) -> ConfigEcho {
    ConfigEcho {
        function: c.function_text.clone(),
        model: model_name(c.model_kind).into(),
        center: [c.center[0].to_string(), c.center[1].to_string()],
        t0: c.t0.to_string(),
        rho: c.rho.to_string(),
        rungs: c.rungs,
        qmax: c.qmax,
        grid: c.grid,
        per_rung: c.per_rung,
        verify_alphas: c.verify_alphas.clone(),
        counterexample: c.counterexample,
        seed: c.seed,
    }
}

fn echo_ladder(ladder: &RadiusLadder, trace: Option<&Trace>) -> LadderEcho {
    LadderEcho {
        t0: ladder.t0.to_string(),
        rho: ladder.rho.to_string(),
        rungs: ladder.count(),
        start: trace.map_or(ladder.count(), |t| t.start),
        counts: trace.map_or_else(Vec::new, |t| t.counts.clone()),
        ladder_floor: rat_to_f64(ladder.radii.last().expect("nonempty")),
    }
}

fn echo_branches(trace: &Trace) -> Vec<BranchEcho> {
    let radii = trace.window_radii_f64();
    trace
        .branches
        .iter()
        .map(|b| {
            let fit: Option<&FitResult> = b.fit.as_ref().and_then(|f| f.as_ref().ok());
            BranchEcho {
                id: b.id,
                constant: b.constant,
                on_zero_set: b.on_zero_set(),
                alpha: b.alpha().map(ToString::to_string),
                alpha_raw: fit.filter(|f| !f.constant).map(|f| f.alpha_raw),
                a: b.a(),
                a_sign: b.a_sign(),
                certified: b.is_certified(),
                residual: fit.filter(|f| !f.constant).map(|f| f.residual),
                fit_error: b
                    .fit
                    .as_ref()
                    .and_then(|f| f.as_ref().err())
                    .map(ToString::to_string),
                limit_theta: b.limit_theta(),
                points: b
                    .points
                    .iter()
                    .zip(&radii)
                    .map(|(p, t)| BranchPointEcho {
                        t: *t,
                        theta: p.theta,
                        f_value: p.f_value,
                        delta: p.delta,
                    })
                    .collect(),
            }
        })
        .collect()
}

fn echo_classification(c: &ClassificationReport) -> ClassificationEcho {
    ClassificationEcho {
        verdict: c.verdict.as_str().into(),
        alpha_star: c.alpha_star.as_ref().map(ToString::to_string),
        a_star: c.a_star,
        lojasiewicz_exponent: c.lojasiewicz_exponent,
        subregularity_order: c.subregularity_order.as_ref().map(ToString::to_string),
        certificate: c.certificate.as_ref().map(|k| CertificateEcho {
            c: k.c,
            epsilon: k.epsilon,
            verified: k.verified.unwrap_or(false),
        }),
        trust_radius: c.trust_radius,
        reasons: c.reasons.clone(),
    }
}

fn echo_probe(p: &InequalityProbe) -> ProbeEcho {
    ProbeEcho {
        name: p.name.as_str().into(),
        alpha: p.alpha,
        inf_ratio: finite(p.inf_ratio),
        trend_slope: p.trend_slope,
        trend_slope_last8: p.trend_slope_last(8),
        samples: p.samples.len(),
        excluded: p.excluded,
        per_rung: p.per_rung.iter().map(|(t, r)| [*t, *r]).collect(),
    }
}

/// Run the whole pipeline for one configuration.
pub fn run(config: &RunConfig) -> Result<AnalysisReport, RunError> {
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };

    if config.counterexample && config.model_kind != ModelKind::AbsOfPoly {
        return Err(RunError::Config(
            "--counterexample needs an absolute-value model".into(),
        ));
    }
    let model = FunctionModel::parse(
        config.model_kind,
        &config.function_text,
        config.center.clone(),
    )?;
    let ladder = build_ladder(&config.t0, &config.rho, config.rungs)?;
    let tp = tangency_polynomial(&model);
    let fbar = model.value_at_center_f64();
    let mut warnings = Vec::new();
    lap("setup", &mut timings);

    let trace = match trace_with_retry(&tp, &ladder) {
        Ok(mut t) => {
            t.fit_all(fbar, config.qmax);
            warnings.extend(t.warnings.iter().cloned());
            Some(t)
        }
        Err(e) => {
            warnings.push(format!("tracing failed: {e}"));
            None
        }
    };
    lap("trace", &mut timings);

    let Some(trace) = trace else {
        let mut classification = classify(&[], rat_to_f64(&ladder.t0));
        classification.reasons.push("no stabilized trace".into());
        return Ok(AnalysisReport {
            schema_version: SCHEMA_VERSION,
            config: echo_config(config),
            tangency_polynomial: tp.g.to_string(),
            value_at_center: model.value_at_center().to_string(),
            ladder: echo_ladder(&ladder, None),
            branches: Vec::new(),
            trust_radius: classification.trust_radius,
            classification: echo_classification(&classification),
            oracle: None,
            probes: Vec::new(),
            counterexample: None,
            warnings,
            timings: config.timings.then_some(timings),
        });
    };

    for b in &trace.branches {
        match &b.fit {
            Some(Ok(f)) => {
                warnings.extend(f.warnings.iter().map(|w| format!("branch {}: {w}", b.id)))
            }
            Some(Err(e)) => warnings.push(format!("branch {}: {e}", b.id)),
            None => {}
        }
    }
    let mut classification = classify(&trace.branches, trace.trust_radius());
    lap("classify", &mut timings);

    let (samples, psi_fit) = fit_psi(&model, &trace.ladder, config.grid, config.qmax);
    let window = trace.window_radii_f64();
    let consistency = psi_consistency(&model, &trace.branches, &window, &samples);
    if !consistency.consistent {
        warnings.push(format!(
            "oracle minimum disagrees with the branch minimum (max relative gap {:.3e})",
            consistency.max_rel_gap
        ));
    }
    let psi_ok = psi_fit.as_ref().ok();
    let oracle = OracleEcho {
        samples: samples
            .iter()
            .map(|s| PsiEcho {
                t: s.t,
                psi: s.psi,
                delta: s.delta,
                argmin_theta: s.argmin_theta,
            })
            .collect(),
        alpha: psi_ok
            .and_then(|f| f.alpha.as_ref())
            .map(ToString::to_string),
        alpha_raw: psi_ok.filter(|f| !f.constant).map(|f| f.alpha_raw),
        a: psi_ok.and_then(|f| f.a),
        constant: psi_ok.map(|f| f.constant),
        fit_error: psi_fit.as_ref().err().map(ToString::to_string),
        consistent: consistency.consistent,
        max_rel_gap: consistency.max_rel_gap,
    };
    lap("oracle", &mut timings);

    // tangency points are where the bounds are tight, so they join the equispaced samples
    let extra: Vec<Vec<[f64; 2]>> = (0..window.len())
        .map(|j| trace.branches.iter().map(|b| b.points[j].offset).collect())
        .collect();
    let run_probe = |name: ProbeName, alpha: Option<f64>| {
        probe(
            &model,
            name,
            alpha,
            &window,
            config.per_rung,
            &extra,
            config.seed,
        )
    };
    let mut probes = Vec::new();
    if let (Some(alpha_star), Some(cert)) = (
        &classification.alpha_star,
        classification.certificate.as_mut(),
    ) {
        let a = rat_to_f64(alpha_star);
        let growth = run_probe(ProbeName::Growth, Some(a))?;
        let holds = growth.inf_ratio >= cert.c;
        cert.verified = Some(holds);
        if !holds {
            warnings.push(format!(
                "sampled growth infimum {:.6e} is below the certificate constant {:.6e}",
                growth.inf_ratio, cert.c
            ));
        }
        probes.push(growth);
        probes.push(run_probe(ProbeName::Growth, Some(a - 0.25))?);
        for name in [ProbeName::Subreg, ProbeName::Loja] {
            let p = run_probe(name, Some(a))?;
            if let Some(slope) = p.trend_slope_last(8).filter(|s| s.abs() > SLOPE_BAND) {
                warnings.push(format!(
                    "{} at alpha {a}: trend slope {slope:.3e} outside +-{SLOPE_BAND}, infimum {:.6e}",
                    name.as_str(),
                    p.inf_ratio
                ));
            }
            probes.push(p);
        }
    }
    probes.push(run_probe(ProbeName::Bl, None)?);
    for &a in &config.verify_alphas {
        for name in [ProbeName::Growth, ProbeName::Subreg, ProbeName::Loja] {
            if !probes.iter().any(|p| p.name == name && p.alpha == Some(a)) {
                probes.push(run_probe(name, Some(a))?);
            }
        }
    }
    if classification
        .certificate
        .as_ref()
        .is_some_and(|c| c.verified == Some(false))
    {
        classification.certificate = None;
    }
    lap("verify", &mut timings);

    let counterexample = if config.counterexample {
        let rep = counterexample_probe(
            &model,
            &trace.ladder.radii_f64(),
            config.per_rung,
            config.seed,
        )?;
        Some(CounterexampleEcho {
            rows: rep
                .rows
                .iter()
                .map(|r| [r.t, r.slope, r.dist, r.ratio])
                .collect(),
            excluded: rep.probe.excluded,
            quadratic_growth_inf: finite(rep.quadratic_growth_inf),
            growth_radius: rep.growth_radius,
            growth_samples: rep.growth_samples,
        })
    } else {
        None
    };
    lap("counterexample", &mut timings);

    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        config: echo_config(config),
        tangency_polynomial: tp.g.to_string(),
        value_at_center: model.value_at_center().to_string(),
        ladder: echo_ladder(&trace.ladder, Some(&trace)),
        branches: echo_branches(&trace),
        trust_radius: trace.trust_radius(),
        classification: echo_classification(&classification),
        oracle: Some(oracle),
        probes: probes.iter().map(echo_probe).collect(),
        counterexample,
        warnings,
        timings: config.timings.then_some(timings),
    })
}

/// `branch_id,t,theta,f_value,delta` rows for every branch and rung, then the `psi` rows.
pub fn write_csv<W: Write>(report: &AnalysisReport, out: W) -> Result<(), RunError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["branch_id", "t", "theta", "f_value", "delta"])?;
    for b in &report.branches {
        let id = b.id.to_string();
        for p in &b.points {
            w.write_record([
                id.clone(),
                format_f64(p.t),
                format_f64(p.theta),
                format_f64(p.f_value),
                format_f64(p.delta),
            ])?;
        }
    }
    if let Some(o) = &report.oracle {
        for s in &o.samples {
            w.write_record([
                "psi".to_string(),
                format_f64(s.t),
                format_f64(s.argmin_theta),
                format_f64(s.psi),
                format_f64(s.delta),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(report: &AnalysisReport, path: &Path) -> Result<(), RunError> {
    let file = std::fs::File::create(path)?;
    write_csv(report, std::io::BufWriter::new(file))
}

pub fn emit_report(report: &AnalysisReport, path: &Path) -> Result<(), RunError> {
    std::fs::write(path, report.to_canonical_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_numbers() {
        let mut out = String::new();
        write_value(
            &serde_json::json!({"b": 1, "a": [0.1, -2.0, null], "c": f64::NAN}),
            0,
            &mut out,
        );
        assert_eq!(
            out,
            "{\n  \"a\": [\n    1.0000000000000001e-1,\n    -2.0000000000000000e0,\n    null\n  ],\n  \"b\": 1,\n  \"c\": null\n}"
        );
    }

    #[test]
    fn cylinder_report_round_trips() {
        let rep = run(&RunConfig::smooth("x^2")).unwrap();
        assert_eq!(rep.verdict(), Verdict::LocalMinNonisolated);
        assert_eq!(rep.exit_code(), 0);
        assert_eq!(rep.tangency_polynomial, "2*x*y");
        let oracle = rep.oracle.as_ref().unwrap();
        assert!(oracle.samples.iter().all(|s| s.delta == 0.0));
        assert!(oracle.consistent);
        assert!(rep.timings.is_none());

        let text = rep.to_canonical_json().unwrap();
        let back = AnalysisReport::from_json(&text).unwrap();
        assert!(back == rep, "report changed in a round trip");
        assert_eq!(back.to_canonical_json().unwrap(), text);
    }

    #[test]
    fn quartic_minimizer_csv_rows() {
        let rep = run(&RunConfig::smooth("2*x^2 + y^4")).unwrap();
        let mut buf = Vec::new();
        write_csv(&rep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let mut branch_rows = 0;
        for rec in rd.records() {
            let rec = rec.unwrap();
            if &rec[0] == "psi" {
                continue;
            }
            branch_rows += 1;
            let t: f64 = rec[1].parse().unwrap();
            let d: f64 = rec[4].parse().unwrap();
            let (quartic, quadratic) = (t.powi(4), 2.0 * t * t);
            assert!(d == quartic || d == quadratic, "t={t} delta={d}");
        }
        assert_eq!(branch_rows, 4 * 24);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn header_only_csv_without_branches() {
        let mut cfg = RunConfig::smooth("x^2");
        cfg.rungs = 4;
        let rep = run(&cfg).unwrap();
        assert_eq!(rep.verdict(), Verdict::Inconclusive);
        assert_eq!(rep.exit_code(), 2);
        let mut buf = Vec::new();
        write_csv(&rep, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "branch_id,t,theta,f_value,delta\n"
        );
    }

    #[test]
    fn counterexample_needs_abs_model() {
        let mut cfg = RunConfig::smooth("x^2");
        cfg.counterexample = true;
        assert!(matches!(run(&cfg), Err(RunError::Config(_))));
    }

    #[test]
    fn parse_errors_surface() {
        assert!(matches!(
            run(&RunConfig::smooth("x^2 +* y")),
            Err(RunError::Model(_))
        ));
        assert!(matches!(
            run(&RunConfig::smooth("x^2 + z")),
            Err(RunError::Model(_))
        ));
    }
}
