//! End-to-end checks of the `entop` binary: exit codes, report invariants,
//! determinism and artifact round-trips.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entop_core::tomography::io::read_matrix_csv;

fn entop() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entop"))
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    entop().args(args).output().unwrap()
}

fn assert_status(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const FLAGSHIP: &str = r#"{
  "name": "bell",
  "operatorSpec": "1*[Z,Z] + 1*[X,X]",
  "inputState": "HH",
  "phiList": [0.0, 1.5707963267948966],
  "countsPerSetting": 2000,
  "poisson": true,
  "repeats": 4,
  "seed": 11
}"#;

#[test]
fn generate_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bell.json", FLAGSHIP);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    for out in [&out_a, &out_b] {
        let result = run(&[
            "generate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_status(&result, 0);
    }

    let a = fs::read(out_a.join("bell.report.json")).unwrap();
    let b = fs::read(out_b.join("bell.report.json")).unwrap();
    assert_eq!(a, b, "same config + seed must serialize identically");
    // The artifacts are part of the deterministic surface too.
    for file in ["bell.phi0.counts.csv", "bell.phi0.state.csv", "bell.phi1.state.csv"] {
        let fa = fs::read(out_a.join(file)).unwrap();
        let fb = fs::read(out_b.join(file)).unwrap();
        assert_eq!(fa, fb, "{file} differs between identical runs");
    }
}

#[test]
fn seed_flag_overrides_config_and_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bell.json", FLAGSHIP);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    assert_status(
        &run(&["generate", "--config", config.to_str().unwrap(), "--out", out_a.to_str().unwrap()]),
        0,
    );
    assert_status(
        &run(&[
            "generate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_b.to_str().unwrap(),
            "--seed",
            "12",
        ]),
        0,
    );
    let a = fs::read_to_string(out_a.join("bell.report.json")).unwrap();
    let b = fs::read_to_string(out_b.join("bell.report.json")).unwrap();
    assert_ne!(a, b);
    assert!(b.contains("\"seed\": 12"));
}

#[test]
fn emitted_matrices_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bell.json", FLAGSHIP);
    let out = dir.path().join("out");
    assert_status(
        &run(&["generate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0,
    );

    let file = fs::File::open(out.join("bell.phi0.state.csv")).unwrap();
    let (labels, rho) = read_matrix_csv(std::io::BufReader::new(file)).unwrap();
    assert_eq!(labels, ["HH", "HV", "VH", "VV"]);
    assert_eq!(rho.rows(), 4);
    // A density matrix: unit trace within reconstruction accuracy.
    assert!((rho.trace().re - 1.0).abs() < 1e-9);
}

#[test]
fn std_fields_track_repeat_count() {
    let dir = tempfile::tempdir().unwrap();
    let single = FLAGSHIP.replace("\"repeats\": 4", "\"repeats\": 1");
    let config = write_config(dir.path(), "single.json", &single);
    let out = dir.path().join("out");
    assert_status(
        &run(&["generate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0,
    );
    let report = fs::read_to_string(out.join("bell.report.json")).unwrap();
    assert!(!report.contains("\"std\""), "repeats = 1 must omit std:\n{report}");

    let config = write_config(dir.path(), "multi.json", FLAGSHIP);
    let out2 = dir.path().join("out2");
    assert_status(
        &run(&["generate", "--config", config.to_str().unwrap(), "--out", out2.to_str().unwrap()]),
        0,
    );
    let report = fs::read_to_string(out2.join("bell.report.json")).unwrap();
    assert!(report.contains("\"std\""), "repeats > 1 must report std:\n{report}");
}

#[test]
fn csv_report_format_is_available() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bell.json", FLAGSHIP);
    let out = dir.path().join("out");
    assert_status(
        &run(&[
            "generate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--format",
            "csv",
        ]),
        0,
    );
    let report = fs::read_to_string(out.join("bell.report.csv")).unwrap();
    assert!(report.starts_with("key,value\n"));
    assert!(report.contains("phi0.fidelity.mean,"));
    assert!(report.contains("phi0.fidelity.std,"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    // Missing file.
    let result = run(&["generate", "--config", "/nonexistent.json", "--out", out.to_str().unwrap()]);
    assert_status(&result, 2);

    // Operator spec syntax error: position carried to stderr.
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"name":"bad","operatorSpec":"1*[Z,","inputState":"HH","seed":1}"#,
    );
    let result = run(&["generate", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_status(&result, 2);
    assert!(String::from_utf8_lossy(&result.stderr).contains("position"));

    // Missing seed on a stochastic run.
    let unseeded = write_config(
        dir.path(),
        "unseeded.json",
        r#"{"name":"u","operatorSpec":"1*[Z,Z] + 1*[X,X]","inputState":"HH"}"#,
    );
    let result =
        run(&["generate", "--config", unseeded.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_status(&result, 2);
    assert!(String::from_utf8_lossy(&result.stderr).contains("seed"));

    // Party-count mismatch between command and operator.
    let three = write_config(
        dir.path(),
        "three.json",
        r#"{"name":"g","operatorSpec":"GHZ","inputState":"HHH","poisson":false,"repeats":1}"#,
    );
    let result =
        run(&["generate", "--config", three.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_status(&result, 2);
}

#[test]
fn annihilated_input_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // (ZZ + XX)/sqrt(2) annihilates |RR>: ZZ|RR> = |LL>, XX|RR> = -|LL>.
    let config = write_config(
        dir.path(),
        "rr.json",
        r#"{"name":"rr","operatorSpec":"1*[Z,Z] + 1*[X,X]","inputState":"RR",
            "poisson":false,"repeats":1}"#,
    );
    let result = run(&["generate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_status(&result, 4);
}

#[test]
fn decompose_emits_schmidt_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), "cnot.json", r#"{"name":"cnot","operatorSpec":"CNOT"}"#);
    let result =
        run(&["decompose", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_status(&result, 0);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("schmidt number: 2"), "{stdout}");
    assert!(stdout.contains("unitary: true"), "{stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("cnot.report.json")).unwrap()).unwrap();
    assert_eq!(report["schmidt_number"], 2);
    assert_eq!(report["unitary"], true);
    let coeffs = report["coefficients"].as_array().unwrap();
    assert_eq!(coeffs.len(), 4);
    let sqrt2 = 2f64.sqrt();
    assert!((coeffs[0].as_f64().unwrap() - sqrt2).abs() < 1e-9);
    assert!((coeffs[1].as_f64().unwrap() - sqrt2).abs() < 1e-9);
    assert!(coeffs[3].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn qpt_runs_without_an_input_state() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "iixx.json",
        r#"{
          "name": "iixx",
          "operatorSpec": "1*[I,I] + exp(i*pi/2)*[X,X]",
          "phiList": [0.0],
          "countsPerSetting": 10000,
          "poisson": false,
          "repeats": 1,
          "seed": 3
        }"#,
    );
    let out = run(&["qpt", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_status(&out, 0);

    let report = fs::read_to_string(dir.path().join("iixx.report.json")).unwrap();
    assert!(report.contains("\"processFidelity\""), "{report}");

    let text = fs::read_to_string(dir.path().join("iixx.phi0.chi.csv")).unwrap();
    let (labels, chi) = read_matrix_csv(text.as_bytes()).unwrap();
    assert_eq!(labels.len(), 16);
    assert_eq!(labels[0], "II");
    // Noiseless exact counts: the reconstruction sits on the ideal rank-1
    // process matrix with II and XX coherences of magnitude 1/2.
    assert!((chi[(0, 0)].re - 0.5).abs() < 1e-3, "chi_II,II = {}", chi[(0, 0)]);
    assert!((chi[(0, 5)].norm() - 0.5).abs() < 1e-3, "chi_II,XX = {}", chi[(0, 5)]);
}

#[test]
fn multiparty_reports_truth_table_for_toffoli() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(
        dir.path(),
        "ccx.json",
        r#"{"name":"ccx","operatorSpec":"TOFFOLI","inputState":"VVH",
            "poisson":false,"repeats":1}"#,
    );
    let result =
        run(&["multiparty", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_status(&result, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ccx.report.json")).unwrap()).unwrap();
    let table = report["results"][0]["truth_table"].as_array().unwrap();
    assert_eq!(table.len(), 8);
    assert!(table.iter().any(|row| row == "VVH -> VVV"));
    let fidelity = report["results"][0]["metrics"]["fidelity"]["mean"].as_f64().unwrap();
    assert!((fidelity - 1.0).abs() < 1e-9);
}

#[test]
fn thread_cap_env_var_is_validated_and_preserves_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bell.json", FLAGSHIP);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    let result = entop()
        .args(["generate", "--config", config.to_str().unwrap(), "--out", out_a.to_str().unwrap()])
        .env("ENTOP_THREADS", "1")
        .output()
        .unwrap();
    assert_status(&result, 0);
    let result = entop()
        .args(["generate", "--config", config.to_str().unwrap(), "--out", out_b.to_str().unwrap()])
        .env("ENTOP_THREADS", "4")
        .output()
        .unwrap();
    assert_status(&result, 0);
    let a = fs::read(out_a.join("bell.report.json")).unwrap();
    let b = fs::read(out_b.join("bell.report.json")).unwrap();
    assert_eq!(a, b, "thread count must not affect report bytes");

    let result = entop()
        .args(["generate", "--config", config.to_str().unwrap(), "--out", out_a.to_str().unwrap()])
        .env("ENTOP_THREADS", "zero")
        .output()
        .unwrap();
    assert_status(&result, 2);
}
