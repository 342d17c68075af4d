use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn problem(name: &str) -> String {
    format!("{}/problems/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parametrix"))
        .args(args)
        .output()
        .expect("run parametrix")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(i).unwrap().parse().unwrap())
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constant_problem_solves_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "solve",
        "--problem",
        &problem("constant"),
        "--out",
        out,
        "--grid",
        "6,8,8,6,16",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let u = column(&csv, "u");
    assert_eq!(u.len(), 18);
    for v in u {
        assert!((v - 1.0).abs() < 2e-2, "{v}");
    }
    let diag = fs::read_to_string(dir.path().join("diagnostics.txt")).unwrap();
    assert!(diag.contains("assumptions.basics pass"));
    assert!(diag.contains("solver.iterations"));
}

#[test]
fn vanishing_side_drift_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "solve",
        "--problem",
        &problem("kolmogorov"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("basics"), "{}", stderr(&o));
    assert!(!dir.path().join("solution.csv").exists());
}

#[test]
fn unreadable_or_malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", "--problem", "/no/such/problem.toml", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "horizon = 0.5\n[b1]\nkind = \"spiral\"\n").unwrap();
    let o = run(&["solve", "--problem", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&[
        "solve",
        "--problem",
        &problem("zero"),
        "--out",
        out,
        "--grid",
        "4,6",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn probe_outside_the_domain_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let probes = dir.path().join("probes.csv");
    fs::write(&probes, "t,x,y\n0.25,-0.1,0.0\n").unwrap();
    let o = run(&[
        "oracle",
        "--problem",
        &problem("zero"),
        "--out",
        dir.path().to_str().unwrap(),
        "--probes",
        probes.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn verify_quick_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "verify",
        "--suite",
        "matrix",
        "--suite",
        "projected",
        "--suite",
        "laplace",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("verify.txt")).unwrap();
    assert!(table.contains("240"));
    assert!(table.contains("failed=0"));
    assert!(!table.contains("FAIL"));
}

#[test]
fn oracle_reads_a_probe_file() {
    let dir = tempfile::tempdir().unwrap();
    let probes = dir.path().join("probes.csv");
    fs::write(
        &probes,
        "t,x,y\n# comment\n0.25, 0.5, 0.0\n0.5,1.0,-0.5\n0.1,0.2,0.3\n",
    )
    .unwrap();
    let o = run(&[
        "oracle",
        "--problem",
        &problem("constant"),
        "--out",
        dir.path().to_str().unwrap(),
        "--probes",
        probes.to_str().unwrap(),
        "--paths",
        "500",
        "--dt",
        "1e-2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,estimate,stderr\n"));
    let est = column(&csv, "estimate");
    assert_eq!(est.len(), 3);
    for e in est {
        assert!((e - 1.0).abs() < 1e-12, "{e}");
    }
}

#[test]
fn compare_on_the_zero_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare",
        "--problem",
        &problem("zero"),
        "--out",
        dir.path().to_str().unwrap(),
        "--grid",
        "4,6,8,4,16",
        "--paths",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(Path::new(dir.path()).join("compare.csv")).unwrap();
    for name in ["u_solver", "u_oracle"] {
        assert!(column(&csv, name).iter().all(|v| *v == 0.0));
    }
}
