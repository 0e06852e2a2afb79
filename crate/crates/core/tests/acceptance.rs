//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness so
//! the lines always show up in `cargo test` output.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tangency_core::branchtrack::{build_ladder, trace_with_retry};
use tangency_core::expansion::fit;
use tangency_core::oracle::{fit_psi, psi_consistency, PSI_FLOOR};
use tangency_core::polynomial::{f64_to_rat, Interval, Polynomial, Rational};
use tangency_core::report::write_csv;
use tangency_core::tangency::{tangency_polynomial, VARS};
use tangency_core::verify::ProbeName;
use tangency_core::{run, AnalysisReport, FunctionModel, ModelKind, RunConfig};

type Check = Result<String, String>;

const LIMIT: Duration = Duration::from_secs(60);

const CORPUS: [(ModelKind, &str); 7] = [
    (ModelKind::Smooth, "3*x^2+2*y^3"),
    (ModelKind::Smooth, "x^2"),
    (ModelKind::Smooth, "2*x^2+y^4"),
    (ModelKind::Smooth, "x^2+y^2"),
    (ModelKind::Smooth, "x^4+y^4"),
    (ModelKind::Smooth, "x^3-3*x*y^2"),
    (ModelKind::AbsOfPoly, "x^2-y^4"),
];

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn report(kind: ModelKind, text: &str) -> Result<AnalysisReport, String> {
    run(&RunConfig::new(kind, text)).map_err(|e| format!("{text}: {e}"))
}

fn proportional(g: &Polynomial, want: &str) -> Result<(), String> {
    let want = Polynomial::parse(want, &VARS).map_err(|e| e.to_string())?;
    let (exps, c) = want.terms().next().ok_or("empty target")?;
    let gc = g.coefficient(exps);
    ensure(
        gc != Rational::from_integer(0.into()),
        format!("tangency polynomial {g} lacks a term of {want}"),
    )?;
    ensure(
        g.scale(&(c / gc)) == want,
        format!("tangency polynomial {g} is not a multiple of {want}"),
    )
}

/// Sorted `(alpha, a)` of the non-constant branches.
fn alpha_a(rep: &AnalysisReport) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = rep
        .branches
        .iter()
        .filter(|b| !b.constant)
        .map(|b| {
            (
                b.alpha.clone().unwrap_or_else(|| "?".into()),
                b.a.unwrap_or(f64::NAN),
            )
        })
        .collect();
    v.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    v
}

fn match_pairs(got: &[(String, f64)], want: &[(&str, f64)]) -> Result<(), String> {
    let mut want: Vec<(String, f64)> = want.iter().map(|(a, c)| (a.to_string(), *c)).collect();
    want.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let ok = got.len() == want.len()
        && got
            .iter()
            .zip(&want)
            .all(|(g, w)| g.0 == w.0 && (g.1 - w.1).abs() <= 1e-6);
    ensure(
        ok,
        format!("branch (alpha, a) = {got:?}, expected {want:?}"),
    )
}

fn verdict_is(rep: &AnalysisReport, want: &str) -> Result<(), String> {
    ensure(
        rep.classification.verdict == want,
        format!("verdict {} (expected {want})", rep.classification.verdict),
    )
}

fn criterion_1() -> Check {
    let model = FunctionModel::smooth("3*x^2+2*y^3").map_err(|e| e.to_string())?;
    proportional(&tangency_polynomial(&model).g, "x*y*(6-6*y)")?;
    let rep = report(ModelKind::Smooth, "3*x^2+2*y^3")?;
    ensure(
        rep.branches.len() == 4,
        format!("{} branches", rep.branches.len()),
    )?;
    match_pairs(
        &alpha_a(&rep),
        &[("3", -2.0), ("3", 2.0), ("2", 3.0), ("2", 3.0)],
    )?;
    verdict_is(&rep, "NOT_LOCAL_MIN")?;
    Ok("4 branches {(3,-2),(3,2),(2,3),(2,3)}, NOT_LOCAL_MIN".into())
}

fn criterion_2() -> Check {
    let model = FunctionModel::smooth("x^2").map_err(|e| e.to_string())?;
    proportional(&tangency_polynomial(&model).g, "2*x*y")?;
    let rep = report(ModelKind::Smooth, "x^2")?;
    let constants = rep.branches.iter().filter(|b| b.constant).count();
    ensure(
        constants == 2 && rep.branches.len() == 4,
        format!("{constants} constant of {} branches", rep.branches.len()),
    )?;
    match_pairs(&alpha_a(&rep), &[("2", 1.0), ("2", 1.0)])?;
    verdict_is(&rep, "LOCAL_MIN_NONISOLATED")?;
    Ok("two constant and two (2,1) branches, LOCAL_MIN_NONISOLATED".into())
}

fn criterion_3() -> Check {
    let rep = report(ModelKind::Smooth, "2*x^2+y^4")?;
    match_pairs(
        &alpha_a(&rep),
        &[("4", 1.0), ("4", 1.0), ("2", 2.0), ("2", 2.0)],
    )?;
    verdict_is(&rep, "ISOLATED_LOCAL_MIN")?;
    let c = &rep.classification;
    ensure(
        c.alpha_star.as_deref() == Some("4"),
        format!("alpha_star {:?}", c.alpha_star),
    )?;
    ensure(
        c.a_star.is_some_and(|a| (a - 1.0).abs() <= 1e-6),
        format!("a_star {:?}", c.a_star),
    )?;
    ensure(
        c.lojasiewicz_exponent == Some(0.75),
        format!("lojasiewicz {:?}", c.lojasiewicz_exponent),
    )?;
    ensure(
        c.subregularity_order.as_deref() == Some("3"),
        format!("subregularity {:?}", c.subregularity_order),
    )?;
    Ok("alpha_star 4, a_star 1, exponent 3/4, subregularity order 3".into())
}

fn criterion_4() -> Check {
    let rep = report(ModelKind::Smooth, "2*x^2+y^4")?;
    let cert = rep
        .classification
        .certificate
        .as_ref()
        .ok_or("no certificate")?;
    ensure((cert.c - 0.9).abs() <= 1e-6, format!("c = {}", cert.c))?;
    let p = rep
        .probe(ProbeName::Growth, Some(4.0))
        .ok_or("no GROWTH probe at 4")?;
    let inf = p.inf_ratio.ok_or("GROWTH probe has no samples")?;
    ensure(
        inf >= 0.9 && cert.verified,
        format!("GROWTH inf_ratio {inf} (verified {})", cert.verified),
    )?;
    Ok(format!(
        "GROWTH(4) inf_ratio {inf:.6} over {} samples",
        p.samples
    ))
}

fn criterion_5() -> Check {
    let rep = report(ModelKind::Smooth, "2*x^2+y^4")?;
    let p = rep
        .probe(ProbeName::Growth, Some(3.75))
        .ok_or("no GROWTH probe at 3.75")?;
    let slope = p.trend_slope.ok_or("no trend slope")?;
    ensure((slope - 0.25).abs() <= 0.05, format!("slope {slope}"))?;
    Ok(format!("GROWTH(3.75) per-rung infimum slope {slope:.4}"))
}

fn criterion_6() -> Check {
    let rep = report(ModelKind::Smooth, "2*x^2+y^4")?;
    let mut parts = Vec::new();
    for name in [ProbeName::Subreg, ProbeName::Loja] {
        let p = rep
            .probe(name, Some(4.0))
            .ok_or(format!("no {} probe at 4", name.as_str()))?;
        let inf = p.inf_ratio.unwrap_or(0.0);
        let slope = p.trend_slope_last8.ok_or("no trend slope")?;
        ensure(
            inf > 0.0 && slope.abs() <= 0.1,
            format!("{}: inf {inf}, slope {slope}", name.as_str()),
        )?;
        parts.push(format!("{} inf {inf:.4} slope {slope:.2e}", name.as_str()));
    }
    Ok(parts.join(", "))
}

fn criterion_7() -> Check {
    let mut cfg = RunConfig::abs("x^2-y^4");
    cfg.counterexample = true;
    let rep = run(&cfg).map_err(|e| e.to_string())?;
    let ce = rep
        .counterexample
        .as_ref()
        .ok_or("no counterexample table")?;
    for [t, slope, dist, _] in &ce.rows {
        ensure(
            (slope / t.powi(3) - 4.0).abs() <= 1e-9,
            format!("m_f/t^3 = {} at t = {t}", slope / t.powi(3)),
        )?;
        if *t <= 1e-2 {
            let r = dist / (t * t);
            ensure(
                (0.9..=1.1).contains(&r),
                format!("dist/t^2 = {r} at t = {t}"),
            )?;
        }
    }
    let ratios: Vec<f64> = ce.rows.iter().map(|r| r[3]).collect();
    ensure(ratios.len() >= 6, "fewer than 6 rows")?;
    let tail = &ratios[ratios.len() - 6..];
    ensure(
        tail.windows(2).all(|w| w[1] < w[0]),
        format!("DIST_RATIO tail not decreasing: {tail:?}"),
    )?;
    let last = *tail.last().unwrap();
    ensure(last <= 0.05, format!("last DIST_RATIO {last}"))?;
    let q = ce
        .quadratic_growth_inf
        .ok_or("no quadratic-growth samples")?;
    ensure(q >= 0.5, format!("inf f/dist^2 = {q}"))?;
    Ok(format!(
        "m_f/t^3 = 4, last DIST_RATIO {last:.3e}, inf f/dist^2 {q:.4}"
    ))
}

fn criterion_8() -> Check {
    let ladder = build_ladder(
        &Rational::new(1.into(), 8.into()),
        &Rational::new(1.into(), 2.into()),
        24,
    )
    .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let (mut rows, mut at_floor) = (0, 0);
    for (kind, text) in CORPUS {
        let model =
            FunctionModel::parse(kind, text, [0.into(), 0.into()].map(Rational::from_integer))
                .map_err(|e| e.to_string())?;
        let trace = trace_with_retry(&tangency_polynomial(&model), &ladder)
            .map_err(|e| format!("{text}: {e}"))?;
        let (samples, _) = fit_psi(&model, &trace.ladder, 4096, 12);
        let c = psi_consistency(&model, &trace.branches, &trace.window_radii_f64(), &samples);
        ensure(
            c.consistent && !c.rows.is_empty(),
            format!("{text}: max relative gap {:.3e}", c.max_rel_gap),
        )?;
        ensure(
            c.max_rel_gap <= 1e-9,
            format!("{text}: max relative gap {:.3e}", c.max_rel_gap),
        )?;
        worst = worst.max(c.max_rel_gap);
        rows += c.rows.len();
        at_floor += c
            .rows
            .iter()
            .filter(|r| r.2.abs() <= PSI_FLOOR * model.scale_at_radius(r.0))
            .count();
    }
    Ok(format!(
        "{} functions, {rows} rungs, worst relative gap {worst:.3e} ({at_floor} rungs at the zero floor compared absolutely)",
        CORPUS.len()
    ))
}

fn criterion_9() -> Check {
    let mut seen = Vec::new();
    for (kind, text) in CORPUS {
        let rep = report(kind, text)?;
        if rep.classification.verdict != "ISOLATED_LOCAL_MIN" {
            continue;
        }
        let o = rep.oracle.as_ref().ok_or(format!("{text}: no oracle"))?;
        let c = &rep.classification;
        ensure(
            o.alpha == c.alpha_star,
            format!("{text}: oracle alpha {:?} vs {:?}", o.alpha, c.alpha_star),
        )?;
        let (oa, ca) = (o.a.ok_or("no oracle a")?, c.a_star.ok_or("no a_star")?);
        ensure(
            (oa / ca - 1.0).abs() <= 1e-6,
            format!("{text}: oracle a {oa} vs {ca}"),
        )?;
        if text == "x^4+y^4" {
            ensure(
                c.alpha_star.as_deref() == Some("4") && (ca - 0.5).abs() <= 1e-6,
                format!("x^4+y^4: ({:?}, {ca})", c.alpha_star),
            )?;
        }
        seen.push(text);
    }
    ensure(seen.len() == 3, format!("isolated entries {seen:?}"))?;
    Ok(format!("oracle agrees on {seen:?}; x^4+y^4 gives (4, 1/2)"))
}

fn criterion_10() -> Check {
    let rep = report(ModelKind::Smooth, "x^3-3*x*y^2")?;
    verdict_is(&rep, "NOT_LOCAL_MIN")?;
    let neg = rep.branches.iter().filter(|b| b.a_sign == -1).count();
    ensure(neg >= 1, "no branch with a_sign = -1")?;
    Ok(format!("NOT_LOCAL_MIN with {neg} descending branches"))
}

fn criterion_11() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let radii: Vec<f64> = (0..24).map(|j| 0.125 * 0.5f64.powi(j)).collect();
    let mut perturbed = 0;
    for case in 0..100 {
        let q: i64 = rng.random_range(1..=12);
        let p: i64 = rng.random_range(1..=6 * q);
        let alpha = Rational::new(p.into(), q.into());
        let af = p as f64 / q as f64;
        let a =
            10f64.powf(rng.random_range(-2.0..2.0)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let tail = case % 2 == 1;
        let mut eta_max: f64 = 0.0;
        let d: Vec<f64> = radii
            .iter()
            .map(|t| {
                let eta = if tail {
                    1e-4 * t.sqrt() * rng.random_range(-1.0..=1.0)
                } else {
                    0.0
                };
                eta_max = eta_max.max(eta.abs());
                a * t.powf(af) * (1.0 + eta)
            })
            .collect();
        let enclosure = Interval::point(f64_to_rat(*d.last().unwrap()));
        let f =
            fit(&d, &radii, 0.0, Some(&enclosure), 12).map_err(|e| format!("case {case}: {e}"))?;
        ensure(
            f.alpha.as_ref() == Some(&alpha),
            format!("case {case}: alpha {:?} vs {alpha}", f.alpha),
        )?;
        let rel = (f.a.unwrap() / a - 1.0).abs();
        // a tail moves the coefficient by at most its own size at the smallest rungs
        let bound = if tail {
            1e-9 + 2.0 * 1e-4 * radii[radii.len() - 4].sqrt()
        } else {
            1e-9
        };
        ensure(
            rel <= bound,
            format!("case {case}: a {} vs {a}", f.a.unwrap()),
        )?;
        ensure(
            f.a_sign as f64 == a.signum() && f.is_certified(),
            format!("case {case}: uncertified"),
        )?;
        perturbed += tail as usize;
    }
    Ok(format!(
        "100 series ({perturbed} with tails): alpha exact, a within bound"
    ))
}

fn criterion_12() -> Check {
    for (kind, text) in CORPUS {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let mut cfg = RunConfig::new(kind, text);
            cfg.counterexample = kind == ModelKind::AbsOfPoly;
            let rep = run(&cfg).map_err(|e| e.to_string())?;
            let mut csv = Vec::new();
            write_csv(&rep, &mut csv).map_err(|e| e.to_string())?;
            outputs.push((rep.to_canonical_json().map_err(|e| e.to_string())?, csv));
        }
        ensure(outputs[0] == outputs[1], format!("{text}: runs differ"))?;
    }
    Ok(format!(
        "{} functions, reports and CSV byte-identical",
        CORPUS.len()
    ))
}

fn main() {
    let criteria: [(u32, fn() -> Check); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|msg| {
            ensure(
                elapsed <= LIMIT,
                format!("took {elapsed:.1?}, limit {LIMIT:?}"),
            )?;
            Ok(msg)
        });
        match result {
            Ok(msg) => println!("PASS criterion {n}: {msg} ({elapsed:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {n}: {msg} ({elapsed:.2?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
