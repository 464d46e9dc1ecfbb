use std::path::Path;
use std::process::{Command, Output};

fn paro(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paro"))
        .args(args)
        .current_dir(dir)
        .env("PARO_LOG_LEVEL", "quiet")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn laplace_square_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sq.cfg", "problem = laplace-square\norbitals = 2\nmax_dofs = 3000\n");
    let out = paro(&["run", &cfg, "--out", "results"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = dir.path().join("results");
    let csv = std::fs::read_to_string(results.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "iter,dofs,lambda_1,lambda_2,eta_total,t_meshgen,t_source,t_project");
    assert!(csv.lines().count() > 2);
    let table = std::fs::read_to_string(results.join("eigenvalues.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "index,eigenvalue");
    assert_eq!(table.lines().count(), 1 + 4);
    let mesh = std::fs::read_to_string(results.join("mesh.txt")).unwrap();
    assert!(mesh.starts_with("2 "));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.starts_with("converged iterations="), "{summary}");
    assert!(summary.contains("lambda_1=") && summary.contains("dofs="));
    assert_eq!(std::fs::read_to_string(results.join("summary.txt")).unwrap(), summary);
}

#[test]
fn unknown_key_is_a_parse_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "problem = laplace-square\nthetta = 0.4\n");
    let out = paro(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error[parse]") && err.contains("line 2") && err.contains("thetta"), "{err}");
}

#[test]
fn hydrogen_ground_state_within_two_percent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.cfg", "problem = hydrogen\nmax_dofs = 20000\n");
    let out = paro(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    let lambda: f64 = summary
        .split_whitespace()
        .find_map(|t| t.strip_prefix("lambda_1="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((lambda + 0.5).abs() <= 0.01, "{summary}");
}

#[test]
fn serial_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sq.cfg", "problem = oscillator\norbitals = 3\nmax_dofs = 4000\nseed = 7\n");
    for name in ["a", "b"] {
        let out = paro(&["run", &cfg, "--workers", "1", "--out", name], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["trace.csv", "eigenvalues.csv", "mesh.txt", "summary.txt"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn kohn_sham_molecule_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("he.mol"), "# helium\n2 0 0 0\n2\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "he.cfg",
        "problem = molecule\nmolecule_file = he.mol\nbox_min = -6\nbox_max = 6\nsubdivisions = 6\nrefine = false\n",
    );
    let out = paro(&["run", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("paro-out/trace.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "iter,dofs,lambda_1,e_tot,eta_total,t_meshgen,t_source,t_project");
    assert!(String::from_utf8(out.stdout).unwrap().contains("e_tot="));
}

#[test]
fn marking_suite_reports_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = paro(&["verify", "--suite", "marking", "--out", "v"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 5);
    assert!(text.lines().all(|l| l.starts_with("suite=marking ") && l.ends_with("result=PASS")), "{text}");
    assert_eq!(std::fs::read_to_string(dir.path().join("v/verify-marking.txt")).unwrap(), text);
}

#[test]
fn unknown_suite_and_bad_log_level_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = paro(&["verify", "--suite", "speed"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown suite"));
    let out = Command::new(env!("CARGO_BIN_EXE_paro"))
        .args(["verify", "--suite", "marking"])
        .env("PARO_LOG_LEVEL", "loud")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
