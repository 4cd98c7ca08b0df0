use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rootpool::io::{PanelFile, Report};
use rootpool::kernels::{b_quadrature, parse_dump, GramKind};
use rootpool::{gram, rayleigh, Density, QuadratureConfig};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rootpool"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pool_report(panel: &Path, dir: &Path) -> Report {
    let out = dir.join("report.json");
    let o = run(&["pool", path_str(panel), "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

fn write_panel(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn two_normal_report() {
    let dir = tempfile::tempdir().unwrap();
    let r = pool_report(&data("two_normal.json"), dir.path());
    assert_eq!(r.conditions.len(), 1);
    let c = &r.conditions[0];
    let alpha = c.alpha_values();
    assert!((alpha[0] - 0.27).abs() < 0.01, "{alpha:?}");
    assert!((alpha[1] - 0.81).abs() < 0.01, "{alpha:?}");
    assert!((c.reduction_percent - 15.8).abs() < 0.5);
    assert_eq!(c.dominant, "expert2");
    assert_eq!(c.rank, 2);
    assert!(c.warnings.is_empty());
}

#[test]
fn duplicated_expert_reports_reduced_rank() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = run(&[
        "pool",
        path_str(&data("duplicated.json")),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("rank-deficient"), "{stderr}");
    let r: Report = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(r.conditions[0].rank, 2);
    assert!(!r.conditions[0].warnings.is_empty());
}

#[test]
fn malformed_json_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_panel(
        dir.path(),
        "bad.json",
        "{\"experts\": [\n  {\"label\": \"a\",, }\n]}",
    );
    let o = run(&["pool", path_str(&p)]);
    assert_eq!(code(&o), 2);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(
        stderr.contains("line 2") && stderr.contains("column"),
        "{stderr}"
    );
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_panel(
        dir.path(),
        "p.json",
        r#"{"experts":[{"label":"a","density":{"family":"normal","mu":0,"sigma":-1}}]}"#,
    );
    assert_eq!(code(&run(&["pool", path_str(&p)])), 2);
    assert_eq!(code(&run(&["pool", "/nonexistent/panel.json"])), 2);
    assert_eq!(code(&run(&["pool"])), 2);
    assert_eq!(
        code(&run(&["verify", path_str(&data("two_normal.json"))])),
        2
    );
    let disjoint = write_panel(
        dir.path(),
        "d.json",
        r#"{"experts":[
            {"label":"a","density":{"family":"beta","a":2,"b":2}},
            {"label":"b","density":{"family":"tabulated","grid":[2,3,4],"values":[0,1,0]}}]}"#,
    );
    assert_eq!(code(&run(&["pool", path_str(&disjoint)])), 2);
    let divergent = write_panel(
        dir.path(),
        "v.json",
        r#"{"experts":[{"label":"a","density":{"family":"beta","a":2,"b":2}}]}"#,
    );
    assert_eq!(code(&run(&["pool", path_str(&divergent)])), 2);
}

#[test]
fn curve_rows_integrate_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = run(&[
        "curve",
        path_str(&data("two_normal.json")),
        "--lo",
        "-12",
        "--hi",
        "14",
        "--n",
        "1001",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,pooled,expert1,expert2");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1001);
    let mass: f64 = rows
        .windows(2)
        .map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1] + w[1][1]))
        .sum();
    assert!((mass - 1.0).abs() < 1e-4, "{mass}");
}

#[test]
fn curve_rejects_inverted_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    for (lo, hi) in [("1", "0"), ("2", "2")] {
        let o = run(&[
            "curve",
            path_str(&data("two_normal.json")),
            "--lo",
            lo,
            "--hi",
            hi,
            "--out",
            path_str(&out),
        ]);
        assert_eq!(code(&o), 2);
    }
    assert!(!out.exists());
}

#[test]
fn ecology_condition_one_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let gp = dir.path().join("c.gp");
    let o = run(&[
        "curve",
        path_str(&data("ecology_ticks.json")),
        "--condition",
        "1",
        "--lo",
        "0",
        "--hi",
        "400",
        "--n",
        "201",
        "--out",
        path_str(&out),
        "--gnuplot",
        path_str(&gp),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 8);
    assert_eq!(&header[..3], &["x", "pooled", "e1_c1"]);
    assert_eq!(text.lines().count(), 202);
    assert!(std::fs::read_to_string(gp).unwrap().contains("using 1:8"));

    // a multi-condition file needs a condition for a single curve
    let o = run(&[
        "curve",
        path_str(&data("ecology_ticks.json")),
        "--out",
        path_str(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gram_singleton_dump() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_panel(
        dir.path(),
        "s.json",
        r#"{"experts":[{"label":"a","density":{"family":"normal","mu":3,"sigma":2}}]}"#,
    );
    let prefix = dir.path().join("g");
    let o = run(&["gram", path_str(&p), "--out", path_str(&prefix)]);
    assert_eq!(code(&o), 0);
    let b = std::fs::read_to_string(dir.path().join("g.B.txt")).unwrap();
    assert_eq!(b, "m=1 kind=B\n1\n");
    let (kind, a) =
        parse_dump(&std::fs::read_to_string(dir.path().join("g.A.txt")).unwrap()).unwrap();
    assert_eq!(kind, GramKind::A);
    // Fisher information of N(3, 2) is 1/4; A holds a quarter of it
    assert!((a[(0, 0)] - 1.0 / 16.0).abs() < 1e-15);
}

fn printed_eigenvalues(stdout: &str, which: &str) -> Vec<f64> {
    let tag = format!("eigenvalues {which}:");
    let line = stdout.lines().find(|l| l.starts_with(&tag)).unwrap();
    line[tag.len()..]
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect()
}

#[test]
fn gram_duplicated_pair_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_panel(
        dir.path(),
        "d.json",
        r#"{"experts":[
            {"label":"a","density":{"family":"gamma","shape":3,"rate":1}},
            {"label":"b","density":{"family":"gamma","shape":3,"rate":1}}]}"#,
    );
    let o = run(&[
        "gram",
        path_str(&p),
        "--out",
        path_str(&dir.path().join("g")),
    ]);
    assert_eq!(code(&o), 0);
    let ev = printed_eigenvalues(&String::from_utf8_lossy(&o.stdout), "B");
    assert_eq!(ev.len(), 2);
    assert!(ev[0].abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12, "{ev:?}");
}

#[test]
fn gram_two_normal_matches_quadrature() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("g");
    let o = run(&[
        "gram",
        path_str(&data("two_normal.json")),
        "--out",
        path_str(&prefix),
    ]);
    assert_eq!(code(&o), 0);
    let (_, b) = parse_dump(&std::fs::read_to_string(dir.path().join("g.B.txt")).unwrap()).unwrap();
    let q = b_quadrature(
        &Density::normal(-1.0, 1.0).unwrap(),
        &Density::normal(1.49, 1.49).unwrap(),
        &QuadratureConfig::default(),
    )
    .unwrap();
    assert!((b[(0, 1)] - q).abs() < 1e-8);
    assert_eq!(b[(0, 1)], b[(1, 0)]);
}

#[test]
fn verify_bundled_examples_pass() {
    for name in [
        "two_normal.json",
        "duplicated.json",
        "mixed_families.json",
        "ecology_ticks.json",
    ] {
        let o = run(&["verify", path_str(&data(name)), "--seed", "11"]);
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(code(&o), 0, "{name}\n{stdout}");
        assert!(!stdout.contains("FAIL"));
    }
}

#[test]
fn verify_catches_corrupted_gram() {
    let o = run(&[
        "verify",
        path_str(&data("two_normal.json")),
        "--seed",
        "11",
        "--corrupt-gram",
    ]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn verify_is_reproducible() {
    let p = data("ecology_ticks.json");
    let args = ["verify", path_str(&p), "--seed", "5"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn pool_is_deterministic_across_runs() {
    let p = data("ecology_ticks.json");
    let (a, b) = (run(&["pool", path_str(&p)]), run(&["pool", path_str(&p)]));
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let r: Report = serde_json::from_slice(&a.stdout).unwrap();
    let names: Vec<&str> = r.conditions.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["1", "2", "3", "4"]);
}

#[test]
fn report_round_trips_information() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "two_normal.json",
        "ecology_ticks.json",
        "mixed_families.json",
    ] {
        let panel_path = data(name);
        let r = pool_report(&panel_path, dir.path());
        let file = PanelFile::parse(&std::fs::read_to_string(&panel_path).unwrap()).unwrap();
        for c in &r.conditions {
            let panel = file
                .panel_for(file.conditions.as_ref().map(|_| c.name.as_str()))
                .unwrap();
            let labels: Vec<&str> = c.alpha.iter().map(|a| a.label.as_str()).collect();
            let expected: Vec<&str> = panel.labels().iter().map(String::as_str).collect();
            assert_eq!(labels, expected);
            let g = gram(&panel, &QuadratureConfig::default()).unwrap();
            let info = rayleigh(&g, &c.alpha_values()).unwrap();
            let rel = (info - c.information).abs() / c.information;
            assert!(rel < 1e-10, "{name}/{}: {rel}", c.name);
        }
    }
}
