use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rpimon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpimon")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const DEPHASING: &str = "mode = master\nsystem = qubit\nA = sz\nkappa = 1\nt_final = 1\nn_steps = 1000\n";

#[test]
fn master_dephasing_coherence_column_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.conf", DEPHASING);
    let out = tmp.path().join("out");
    let o = rpimon(&[&cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("expectation.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# rpimon "));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (ti, ci) = (0, header.iter().position(|h| *h == "abs_rho01").unwrap());
    let mut rows = 0;
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let exact = 0.5 * (-2.0 * f[ti]).exp();
        assert!((f[ci] - exact).abs() <= 1e-6 * exact, "t = {}", f[ti]);
        rows += 1;
    }
    assert_eq!(rows, 1001);
}

#[test]
fn every_artifact_records_version_and_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.conf",
        "mode = ensemble\nseed = 3\nn_traj = 50\nkappa = 1\nt_final = 0.2\ndt = 0.01\n",
    );
    let out = tmp.path().join("out");
    assert!(rpimon(&[&cfg, "--out", out.to_str().unwrap()]).status.success());
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert!(first.starts_with(&format!("# rpimon {} config-sha256=", env!("CARGO_PKG_VERSION"))));
    let hash = first.rsplit('=').next().unwrap();
    assert_eq!(hash.len(), 64);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ensemble.json")).unwrap()).unwrap();
    assert!(json["generator"].as_str().unwrap().ends_with(hash));
    assert_eq!(json["n_traj"], 50);
    assert_eq!(json["seed"], 3);
    assert_eq!(json["t_grid"].as_array().unwrap().len(), 21);
    let rho0 = &json["rho_avg"][0];
    assert_eq!(rho0.as_array().unwrap().len(), 4);
    assert_eq!(rho0[0][0].as_f64().unwrap(), 0.5);
}

#[test]
fn config_errors_exit_1_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.conf", &DEPHASING.replace("kappa = 1", "kappa = -1"));
    let o = rpimon(&[&cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4: kappa must be ≥ 0"), "{err}");

    let cfg = write(tmp.path(), "seedless.conf", "mode = sample\nkappa = 1\nt_final = 1\nn_steps = 10\n");
    let o = rpimon(&[&cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'seed'"));

    let o = rpimon(&[&write(tmp.path(), "ok.conf", DEPHASING), "--threads", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_config_file_exits_3() {
    let o = rpimon(&["/nonexistent/run.conf"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.conf", DEPHASING);
    let blocker = write(tmp.path(), "file", "");
    let o = rpimon(&[&cfg, "--out", &blocker]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn numerical_failure_exits_2_and_leaves_no_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    // RK4 is unstable at kappa dt = 100
    let cfg = write(tmp.path(), "run.conf", "mode = master\nkappa = 1000\nt_final = 1\nn_steps = 10\n");
    let out = tmp.path().join("out");
    let o = rpimon(&[&cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
    assert!(!out.exists());

    // oscillator truncation guard
    let cfg = write(
        tmp.path(),
        "osc.conf",
        "mode = master\nsystem = oscillator\nd = 6\nalpha = 1.5\nkappa = 0.1\nt_final = 1\nn_steps = 100\n",
    );
    let o = rpimon(&[&cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncation"));
}

#[test]
fn check_mode_lists_every_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "check.conf", "mode = check\n");
    let out = tmp.path().join("out");
    let o = rpimon(&[&cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for name in ["unitarity quadrature", "master forms agree", "ehrenfest momentum", "lattice convergence monotone"] {
        assert!(stdout.contains(name), "{name} missing");
    }
    assert!(!stdout.contains("FAIL"));
    let report = fs::read_to_string(out.join("check.csv")).unwrap();
    assert_eq!(report.lines().nth(1), Some("name,deviation,tolerance,passed"));
}

#[test]
fn overrides_reach_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.conf", DEPHASING);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(rpimon(&[&cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(rpimon(&[&cfg, "--set", "monitor.kappa=2", "--out", b.to_str().unwrap()]).status.success());
    let last = |dir: &Path| fs::read_to_string(dir.join("expectation.csv")).unwrap().lines().last().unwrap().to_string();
    assert_ne!(last(&a), last(&b));
}

#[test]
fn selective_run_from_readout_file() {
    let tmp = tempfile::tempdir().unwrap();
    let readout = write(tmp.path(), "readout.csv", "# recorded\nt,a\n0,1\n0.1,1\n0.2,1\n");
    let cfg = write(tmp.path(), "run.conf", &format!("mode = selective\nkappa = 0.5\nreadout_file = {readout}\n"));
    let out = tmp.path().join("out");
    let o = rpimon(&[&cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    // |psi|^2 = (1 + e^{-8 kappa t}) / 2 for the plus state and a = +1
    let f: Vec<f64> = rows[3].split(',').take(2).map(|x| x.parse().unwrap()).collect();
    assert!((f[1] - 0.5 * (1.0 + (-8.0 * 0.5 * f[0]).exp())).abs() < 1e-14);
    assert!(rows[3].ends_with(','));
}

#[test]
fn custom_matrix_system() {
    let tmp = tempfile::tempdir().unwrap();
    let matrices = r#"{"h": [[[0,0],[0.5,0],[0,0]], [[0.5,0],[0,0],[0.5,0]], [[0,0],[0.5,0],[0,0]]],
                       "a": [[[1,0],[0,0],[0,0]], [[0,0],[0,0],[0,0]], [[0,0],[0,0],[-1,0]]]}"#;
    let m = write(tmp.path(), "system.json", matrices);
    let cfg = write(tmp.path(), "run.conf", &format!("mode = master\nsystem = custom\nmatrix_file = {m}\nkappa = 0.3\nt_final = 1\nn_steps = 200\n"));
    let out = tmp.path().join("out");
    let o = rpimon(&[&cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("expectation.csv")).unwrap();
    assert_eq!(text.lines().nth(1), Some("t,<A>,<H>,purity,trace,abs_rho01"));

    let bad = write(tmp.path(), "bad.json", r#"{"h": [[[0,0]]], "a": [[[0,1]]]}"#);
    let cfg = write(tmp.path(), "bad.conf", &format!("mode = master\nsystem = custom\nmatrix_file = {bad}\nkappa = 0.3\nt_final = 1\nn_steps = 2\n"));
    assert_eq!(rpimon(&[&cfg]).status.code(), Some(1));
}

#[test]
fn lattice_mode_writes_convergence_and_propagators() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.conf",
        "mode = lattice\nkappa = 0.5\nt_final = 0.4\nn_q = 41\nq_max = 6\ndts = 0.04, 0.02\nreadout_levels = 0.5, 0\nlevel_duration = 0.2\n",
    );
    let out = tmp.path().join("out");
    let o = rpimon(&[&cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(conv.lines().nth(1), Some("dt,deviation_max"));
    assert_eq!(conv.lines().count(), 4);
    let prop = fs::read_to_string(out.join("propagator_rpi.csv")).unwrap();
    assert_eq!(prop.lines().count(), 2 + 41 * 41);
}
