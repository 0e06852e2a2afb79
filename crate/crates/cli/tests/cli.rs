use std::path::Path;
use std::process::{Command, Output};

use tangency_core::AnalysisReport;

fn tangency(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tangency"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_report(path: &Path) -> AnalysisReport {
    AnalysisReport::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cubic_saddle_is_not_a_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let out = tangency(&[
        "analyze",
        "--fn",
        "3*x^2+2*y^3",
        "--at",
        "0,0",
        "--report",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_report(&rep);
    assert_eq!(r.classification.verdict, "NOT_LOCAL_MIN");
    let mut a: Vec<f64> = r.branches.iter().map(|b| b.a.unwrap()).collect();
    a.sort_by(f64::total_cmp);
    for (got, want) in a.iter().zip([-2.0, 2.0, 3.0, 3.0]) {
        assert!((got - want).abs() < 1e-6, "{a:?}");
    }
}

#[test]
fn quartic_minimizer_reports_order_four() {
    let out = tangency(&["analyze", "--fn", "2*x^2+y^4", "--at", "0,0"]);
    assert_eq!(code(&out), 0);
    let r = AnalysisReport::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let c = &r.classification;
    assert_eq!(c.verdict, "ISOLATED_LOCAL_MIN");
    assert_eq!(c.alpha_star.as_deref(), Some("4"));
    assert!((c.a_star.unwrap() - 1.0).abs() < 1e-6);
    assert!((c.lojasiewicz_exponent.unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn abs_counterexample_reports_distance_decay() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let out = tangency(&[
        "analyze",
        "--abs",
        "x^2-y^4",
        "--at",
        "0,0",
        "--counterexample",
        "--report",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_report(&rep);
    assert_eq!(r.classification.verdict, "LOCAL_MIN_NONISOLATED");
    let ce = r.counterexample.expect("counterexample table");
    let ratios: Vec<f64> = ce.rows.iter().map(|row| row[3]).collect();
    assert!(ratios.len() >= 8);
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn shifted_center_with_rational_literals() {
    let out = tangency(&["analyze", "--fn", "(x-1/2)^2+(y+1)^2", "--at", "1/2,-1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = AnalysisReport::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(r.classification.verdict, "ISOLATED_LOCAL_MIN");
    assert_eq!(r.classification.alpha_star.as_deref(), Some("2"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let rep = dir.path().join(format!("r{k}.json"));
        let csv = dir.path().join(format!("c{k}.csv"));
        let out = tangency(&[
            "analyze",
            "--fn",
            "2*x^2+y^4",
            "--alpha",
            "3",
            "--seed",
            "7",
            "--report",
            rep.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        files.push((std::fs::read(&rep).unwrap(), std::fs::read(&csv).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let csv = String::from_utf8(files[0].1.clone()).unwrap();
    assert!(!csv.contains('\r'));
    assert!(csv.starts_with("branch_id,t,theta,f_value,delta\n"));
}

#[test]
fn short_ladder_is_inconclusive_with_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("c.csv");
    let out = tangency(&[
        "analyze",
        "--fn",
        "x^2",
        "--rungs",
        "4",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(
        std::fs::read_to_string(&csv).unwrap(),
        "branch_id,t,theta,f_value,delta\n"
    );
}

#[test]
fn parse_error_names_the_position() {
    let out = tangency(&["analyze", "--fn", "x^2+*y"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("position 4"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        code(&tangency(&["analyze", "--fn", "x^2", "--counterexample"])),
        1
    );
    assert_eq!(
        code(&tangency(&["analyze", "--fn", "x^2", "--abs", "y^2"])),
        1
    );
    assert_eq!(code(&tangency(&["analyze"])), 1);
    assert_eq!(code(&tangency(&["analyze", "--fn", "x^2", "--at", "1"])), 1);
    assert_eq!(
        code(&tangency(&["analyze", "--fn", "x^2", "--rho", "2"])),
        1
    );
    assert_eq!(code(&tangency(&["analyze", "--fn", "z^2"])), 1);
}
