use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn fracctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracctl")).args(args).output().expect("spawn fracctl")
}

fn run(sub: &str, spec: &str, out: &Path, extra: &[&str]) -> Output {
    let spec = fixture(spec);
    let mut args = vec![sub, spec.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fracctl(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn linear_scalar_instance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("linear", "linear_scalar.json", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&dir.path().join("linear_trajectory.csv"));
    assert_eq!(header, ["t", "y_1", "u_1"]);
    assert_eq!(rows.len(), 2001);
    for (j, row) in rows.iter().enumerate() {
        assert_eq!(row[0], j as f64 * (1.0 / 2000.0));
        assert!((row[2] - 0.8862269).abs() < 1e-6);
    }
    assert!((rows[2000][1] - 1.0).abs() < 1e-3);
    let law = json(&dir.path().join("linear_law.json"));
    assert!((law["gramian"]["matrix"][0][0].as_f64().unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-4);
    assert_eq!(law["frozen_field"], 1.0);
    assert_eq!(law["problem"]["d"], 1);

    let coarse = tempfile::tempdir().unwrap();
    let o = run("linear", "linear_scalar.json", coarse.path(), &["--n-steps", "100"]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv_rows(&coarse.path().join("linear_trajectory.csv")).1.len(), 101);
}

#[test]
fn not_controllable_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["linear", "nonlinear"] {
        let o = run(sub, "not_controllable.json", dir.path(), &[]);
        assert_eq!(code(&o), 2, "{sub}");
        assert!(stderr(&o).contains("Kalman rank 0"), "{}", stderr(&o));
    }
}

#[test]
fn input_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("linear", "bad_alpha.json", dir.path(), &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("alpha"));
    let o = run("nonlinear", "asymmetric_a.json", dir.path(), &[]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("A symmetric"));

    let bad = dir.path().join("broken.json");
    fs::write(&bad, "{\"alpha\": 0.5,").unwrap();
    assert_eq!(code(&fracctl(&["linear", bad.to_str().unwrap()])), 3);
    let unknown = dir.path().join("unknown.json");
    let text = fs::read_to_string(fixture("linear_scalar.json")).unwrap().replacen('{', "{\"colour\": 1,", 1);
    fs::write(&unknown, text).unwrap();
    assert_eq!(code(&fracctl(&["linear", unknown.to_str().unwrap()])), 3);
    assert_eq!(code(&fracctl(&["linear", "/no/such/spec.json"])), 3);
    assert_eq!(code(&fracctl(&["frobnicate"])), 3);
    assert_eq!(code(&fracctl(&["tabulate-ml", "--alpha", "0.5", "--from", "1", "--to", "0"])), 3);
    assert_eq!(code(&fracctl(&["tabulate-ml", "--alpha", "2.5", "--out-dir", dir.path().to_str().unwrap()])), 3);
    assert_eq!(code(&fracctl(&["--help"])), 0);
}

#[test]
fn capped_iterations_exit_four_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("nonlinear", "capped_iterations.json", dir.path(), &[]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["converged"], false);
    assert_eq!(report["iterations"].as_array().unwrap().len(), 1);
    assert_eq!(csv_rows(&dir.path().join("trajectory.csv")).1.len(), 401);
}

#[test]
fn io_errors_exit_five() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "").unwrap();
    let o = run("linear", "linear_scalar.json", &file.join("sub"), &[]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let o = run("verify", "constant_two.json", &dir.path().join("empty"), &[]);
    assert_eq!(code(&o), 5);
}

#[test]
fn nonlinear_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("nonlinear", "constant_two.json", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["converged"], true);
    let iterations = report["iterations"].as_array().unwrap();
    assert!(iterations.len() <= 2);
    assert_eq!(
        iterations.iter().map(|r| r["index"].as_u64().unwrap()).collect::<Vec<_>>(),
        (1..=iterations.len() as u64).collect::<Vec<_>>()
    );
    let split = &iterations[0]["split"];
    assert_eq!((split["m_v"].as_f64(), split["k_v"].as_f64(), split["t_v"].as_f64()), (Some(2.0), Some(4.0), Some(0.5)));
    assert_eq!(report["control_jump"]["node"], 1000);
    assert_eq!(report["numerics"]["fp_tol"], 1e-6);

    let (header, rows) = csv_rows(&dir.path().join("trajectory.csv"));
    assert_eq!(header, ["t", "y_1", "y_2", "u_1", "u_2"]);
    assert_eq!(rows.len(), 2001);
    assert_eq!(&rows[0][1..3], &[1.0, 0.0]);
    assert!(rows[..=1000].iter().all(|r| r[3] == 0.0 && r[4] == 0.0));

    let o = run("verify", "constant_two.json", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&dir.path().join("verify.json"));
    assert_eq!(v["agree"], true);
    assert!(v["ratio"].as_f64().unwrap() <= 2.0);
    assert_eq!(v["report_terminal_error"], report["terminal_error"]);

    // a different problem cannot be verified against this report
    let o = run("verify", "reference_d2.json", dir.path(), &[]);
    assert_eq!(code(&o), 3);
}

#[test]
fn verify_rejects_a_tampered_control() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run("nonlinear", "constant_two.json", dir.path(), &[])), 0);
    let path = dir.path().join("trajectory.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for line in lines.iter_mut().skip(1502) {
        let mut cells: Vec<String> = line.split(',').map(str::to_string).collect();
        let u: f64 = cells[3].parse().unwrap();
        cells[3] = format!("{:.16e}", u + 0.5);
        *line = cells.join(",");
    }
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = run("verify", "constant_two.json", dir.path(), &[]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert_eq!(json(&dir.path().join("verify.json"))["agree"], false);
}

#[test]
fn runs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&run("nonlinear", "capped_iterations.json", d.path(), &["--max-iter", "3", "--seed", "7"])), 4);
    }
    for name in ["report.json", "trajectory.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let report = json(&a.path().join("report.json"));
    assert_eq!(report["seed"], 7);
    assert_eq!(report["numerics"]["max_iter"], 3);
}

#[test]
fn tabulate_mittag_leffler() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fracctl(&["tabulate-ml", "--alpha", "1", "--from", "-2", "--to", "2", "--points", "41", "--out-dir", out]);
    assert_eq!(code(&o), 0);
    let (header, rows) = csv_rows(&dir.path().join("mittag_leffler.csv"));
    assert_eq!(header, ["x", "value"]);
    assert_eq!(rows.len(), 41);
    for r in &rows {
        assert!((r[1] - r[0].exp()).abs() <= 1e-12 * r[0].exp());
    }
}
