use std::path::Path;
use std::process::{Command, Output};

fn airga(args: &[&str], dirs: &[&Path]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_airga"));
    c.args(args);
    for d in dirs {
        c.arg(d);
    }
    c.output().unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airga")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, n: usize) {
    let o = airga(&["generate", "--n", &n.to_string(), "--out"], &[dir]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_system_files() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    generate(&full, 50);
    for f in ["M.mtx", "D.mtx", "K.mtx", "F.mtx", "Cp.mtx", "manifest.txt"] {
        assert!(full.join(f).is_file(), "{f}");
    }
    let sys = airga::model_io::read_system(&full).unwrap();
    assert_eq!(sys.n(), 50);
}

#[test]
fn usage_errors_exit_2() {
    let o = run(&["generate", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--n"));
    assert_eq!(run(&["reduce", "--in", "a", "--out", "b", "--solver", "bogus"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = airga(&["reduce", "--in"], &[&tmp.path().join("absent"), Path::new("--out"), tmp.path()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("manifest.txt") && err.contains("missing"), "{err}");
    assert_eq!(err.matches("missing").count(), 1, "{err}");
}

#[test]
fn reduce_evaluate_and_diagnose() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    generate(&full, 200);

    let direct = tmp.path().join("direct");
    let o = run(&["reduce", "--in", path(&full), "--out", path(&direct), "--solver", "direct"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("final r:"));
    for f in ["basis.mtx", "cells.csv", "outer.csv", "moment_errors.csv", "report.txt", "reduced/K.mtx"] {
        assert!(direct.join(f).is_file(), "{f}");
    }
    assert!(!direct.join("ledger").exists());
    let report = std::fs::read_to_string(direct.join("report.txt")).unwrap();
    assert!(report.contains("seed: 42"));

    let o = run(&["evaluate", "--full", path(&full), "--reduced", path(&direct.join("reduced"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("relative H2 error")).unwrap().to_string();
    let rel: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(rel < 1e-3, "{line}");

    let o = run(&["diagnose", "--trace", path(&direct), "--system", path(&full)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no residual ledger"), "{}", stderr(&o));
}

#[test]
fn evaluate_identical_models_single_frequency() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    generate(&full, 30);
    let csv = tmp.path().join("pts.csv");
    let o = run(&["evaluate", "--full", path(&full), "--reduced", path(&full), "--grid", "2:2:1", "--csv", path(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    let line = s.lines().find(|l| l.starts_with("relative H2 error")).unwrap();
    let rel: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(rel <= 1e-12, "{s}");
    assert!(s.contains("max pointwise error: 0.000000e0"), "{s}");
    assert!(s.contains("grid points: 1"));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2);
}

#[test]
fn evaluate_rejects_mismatched_io() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    generate(&a, 20);
    let sys = airga::model_io::read_system(&a).unwrap();
    let f2 = airga::linalg::DenseMatrix::zeros(20, 2);
    let mut f2 = f2;
    f2[(0, 0)] = 1.0;
    f2[(1, 1)] = 1.0;
    let two = airga::system::SecondOrderSystem::new(
        sys.m.clone(),
        sys.d.clone(),
        sys.k.clone(),
        f2,
        sys.cp.clone(),
        None,
        sys.alpha,
        sys.beta,
    )
    .unwrap();
    let b = tmp.path().join("b");
    airga::model_io::write_system(&b, &two).unwrap();
    let o = run(&["evaluate", "--full", path(&a), "--reduced", path(&b)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("reduced model is"), "{}", stderr(&o));
}

#[test]
fn cg_run_diagnoses() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    generate(&full, 100);
    let out = tmp.path().join("cg");
    let o = run(&["reduce", "--in", path(&full), "--out", path(&out), "--solver", "cg", "--rmax", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("ledger/ledger.txt").is_file());
    let o = run(&["diagnose", "--trace", path(&out), "--system", path(&full), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("seed: 3"));
    assert!(s.contains("stability verdict: holds"), "{s}");
    let orth = std::fs::read_to_string(out.join("orthogonality.csv")).unwrap();
    assert!(orth.starts_with("t,j,trace_v_eta,eta_norm,at_roundoff"));
    assert!(out.join("conditions.csv").is_file());
}

#[test]
fn bench_records_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench");
    // n = 1 is rejected by the generator; the n = 40 cells still run.
    let o = run(&["bench", "--sizes", "1,40", "--solvers", "direct,cg-spai", "--repeats", "1", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let totals = std::fs::read_to_string(out.join("bench_totals.csv")).unwrap();
    assert_eq!(totals.lines().count(), 5, "{totals}");
    assert!(totals.lines().any(|l| l.starts_with("40,cg-spai,1,0,")), "{totals}");
    assert!(totals.lines().any(|l| l.starts_with("1,direct,0,1,")), "{totals}");
    assert!(out.join("bench_runs.csv").is_file() && out.join("bench_cells.csv").is_file());
}
