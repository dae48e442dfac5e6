use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rbk_core::OracleReport;

fn rbk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbk"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

/// Parses a CSV with a header row into (header, rows).
fn csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    assert!(text.ends_with('\n'), "rows must be newline-terminated");
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect::<Vec<_>>();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect::<Vec<_>>();
    assert!(rows.iter().all(|r| r.len() == header.len()));
    (header, rows)
}

#[test]
fn simulate_monodisperse() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(dir.path(), &["simulate", "--kernel", "const:1", "--ic", "mono:1,1", "--n", "4", "--grid", "0,1,2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let (header, rows) = csv(&read(dir.path(), "trajectory.csv"));
    assert_eq!(header, ["t", "c_1", "c_2", "c_3", "c_4"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], 1.0);
    assert!((rows[1][1] - 0.5).abs() <= 1e-8);
    assert!(rows.iter().all(|r| r[2..].iter().all(|v| v.to_bits() == 0)));

    let (header, rows) = csv(&read(dir.path(), "moments.csv"));
    assert_eq!(header, ["t", "nu", "mass", "nu_odd"]);
    assert_eq!(rows[0], [0.0, 1.0, 1.0, 1.0]);

    let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "metadata.json")).unwrap();
    assert_eq!(meta["growth_class"], "Bounded");
    assert_eq!(meta["n"], 4);
    assert!(meta["stats"]["accepted_steps"].as_u64().unwrap() > 0);
}

#[test]
fn values_are_written_with_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(dir.path(), &["simulate", "--kernel", "const:1", "--ic", "geom:1,0.5", "--n", "16", "--grid", "0,1,3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = read(dir.path(), "trajectory.csv");
    let second = text.lines().nth(1).unwrap();
    for field in second.split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
    }
}

#[test]
fn geometric_metadata_reports_tail() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(dir.path(), &["simulate", "--kernel", "product:1,0.5", "--ic", "geom:1,0.5", "--n", "8", "--grid", "0,1,2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "metadata.json")).unwrap();
    // sum_{j > 8} j 2^-j = 10 / 2^8
    let tail = meta["truncated_mass"].as_f64().unwrap();
    assert!((tail - 10.0 / 256.0).abs() < 1e-15, "{tail}");
    assert_eq!(meta["growth_class"], "SqrtProduct");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--kernel", "product:1,1", "--ic", "geom:0.5,0.7", "--n", "200", "--grid", "0.01,10,7,log"];
    assert_eq!(code(&rbk(a.path(), &args)), 0);
    assert_eq!(code(&rbk(b.path(), &args)), 0);
    for name in ["trajectory.csv", "moments.csv", "metadata.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn configuration_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(dir.path(), &["simulate", "--kernel", "expr:j-k", "--ic", "mono:1,1", "--n", "4"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("not symmetric"), "{}", stderr(&out));

    let out = rbk(dir.path(), &["simulate", "--kernel", "const:1", "--ic", "explicit:missing.csv", "--n", "4"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.csv"), "{}", stderr(&out));

    for args in [
        &["simulate", "--kernel", "const:1", "--ic", "geom:1,0.5"][..],
        &["simulate", "--kernel", "const:1", "--ic", "mono:1,1", "--grid", "1,0,3"],
        &["simulate", "--kernel", "const:1", "--ic", "mono:1,1", "--rel-tol", "-1"],
        &["simulate", "--kernel", "const:1", "--ic", "mono:5,1", "--n", "4"],
        &["simulate", "--kernel", "expr:j+k", "--ic", "mono:1,1", "--rhs", "fast"],
        &["verify", "--kernel", "const:1", "--ic", "mono:1,1", "--suite", "everything"],
        &["simulate", "--kernel", "bogus", "--ic", "mono:1,1"],
    ] {
        let out = rbk(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn integrator_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(
        dir.path(),
        &["simulate", "--kernel", "const:1", "--ic", "geom:1,0.5", "--n", "16", "--rel-tol", "1e-300", "--abs-tol", "1e-300"],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn verify_oracles_on_self_similar_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(dir.path(), &["verify", "--kernel", "const:1", "--ic", "geom:1,0.5", "--n", "64", "--suite", "oracles"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let reports: Vec<OracleReport> = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    assert!(reports.iter().all(|r| r.pass || r.skipped));
    assert!(reports.iter().any(|r| r.check == "self_similar" && r.pass));
    assert!(reports.iter().any(|r| r.check == "odd_count" && r.pass));
}

#[test]
fn verify_support_reports_observed_support() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.csv"), "j,c\n6,1\n10,1\n").unwrap();
    let out = rbk(dir.path(), &["verify", "--kernel", "const:1", "--ic", "explicit:p.csv", "--suite", "support"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let reports: Vec<OracleReport> = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].support, Some(vec![2, 4, 6, 8, 10]));
}

#[test]
fn verify_skips_constant_kernel_checks_for_other_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(dir.path(), &["verify", "--kernel", "product:1,1", "--ic", "geom:1,0.5", "--n", "32", "--suite", "oracles"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let reports: Vec<OracleReport> = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    for name in ["self_similar", "odd_count", "nu_envelope"] {
        let r = reports.iter().find(|r| r.check == name).unwrap();
        assert!(r.skipped && !r.pass, "{r}");
        assert!(r.detail.contains("constant kernel"), "{r}");
    }
}

#[test]
fn verify_failure_still_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    // N = 8 is far too small for geometric data with alpha = 0.9.
    let out = rbk(dir.path(), &["verify", "--kernel", "const:1", "--ic", "geom:1,0.9", "--n", "8", "--suite", "oracles"]);
    assert_eq!(code(&out), 1);
    let reports: Vec<OracleReport> = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    assert!(reports.iter().any(|r| r.check == "self_similar" && !r.pass && !r.skipped));
}

#[test]
fn report_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(
        dir.path(),
        &["verify", "--kernel", "const:1", "--ic", "geom:1,0.5", "--n", "32", "--grid", "0,2,5", "--suite", "all"],
    );
    assert!(code(&out) <= 1, "{}", stderr(&out));
    let text = read(dir.path(), "report.json");
    let reports: Vec<OracleReport> = serde_json::from_str(&text).unwrap();
    let again: Vec<OracleReport> = serde_json::from_str(&serde_json::to_string(&reports).unwrap()).unwrap();
    assert_eq!(reports, again);
    assert!(reports.len() >= 9);
}

#[test]
fn scaling_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(dir.path(), &["scaling", "--kernel", "const:1", "--ic", "geom:1,0.5", "--n", "64", "--jmax", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv(&read(dir.path(), "scaling.csv"));
    assert_eq!(header, ["t", "t_nu", "t_nu_odd", "t_c_1", "t_c_2", "t_c_3", "t_c_4", "t_c_5"]);
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1000.0);
    assert!((last[1] - 1.5).abs() / 1.5 < 5e-3);

    let out = rbk(dir.path(), &["scaling", "--kernel", "const:1", "--ic", "mono:1,1", "--n", "1", "--jmax", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (_, rows) = csv(&read(dir.path(), "scaling.csv"));
    let tc1: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    assert!(tc1.windows(2).all(|w| w[1] > w[0]));
    assert!((tc1.last().unwrap() - 1.0).abs() < 2e-3);

    let out = rbk(dir.path(), &["scaling", "--kernel", "product:1,0.5", "--ic", "geom:1,0.5", "--n", "64"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn convergence_ladders() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbk(dir.path(), &["convergence", "--kernel", "const:1", "--ic", "geom:1,0.9", "--sizes", "32,64,128"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv(&read(dir.path(), "convergence.csv"));
    assert_eq!(header, ["N", "D"]);
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [32.0, 64.0]);
    assert!(rows[1][1] < rows[0][1]);

    let out = rbk(dir.path(), &["convergence", "--kernel", "const:1", "--ic", "mono:4,1", "--sizes", "4,8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read(dir.path(), "convergence.csv"), "N,D\n4,0.0000000000000000e0\n");

    let out = rbk(dir.path(), &["convergence", "--kernel", "const:1", "--ic", "mono:4,1", "--sizes", "64,32"]);
    assert_eq!(code(&out), 2);
}
