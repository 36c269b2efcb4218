use std::path::Path;
use std::process::{Command, Output};

fn fmsound(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmsound"))
        .current_dir(dir)
        .env_remove("FMSOUND_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn model_eval_hilly_floor() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsound(dir.path(), &["model", "eval", "--model", "hilly", "--tau", "8"]);
    assert!(out.status.success());
    let v: f64 = stdout(&out).trim().parse().unwrap();
    assert_eq!(v, -30.5);
}

#[test]
fn model_eval_json_lists_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsound(dir.path(), &["--json", "model", "eval", "--model", "bad-urban", "--tau", "0,5,20"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = v["points"].as_array().unwrap();
    assert_eq!(p.len(), 3);
    assert!((p[1]["power_db"].as_f64().unwrap() + 8.5).abs() < 1e-12);
}

#[test]
fn non_primitive_taps_exit_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsound(dir.path(), &["generate", "--m", "10", "--taps", "10,4"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"], "NonPrimitivePolynomial");
    assert!(!dir.path().join("tx.iq").exists());
}

#[test]
fn bad_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsound(dir.path(), &["emulate", "--fading", "sideways", "-i", "tx.iq"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "UsageError");
}

#[test]
fn missing_capture_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsound(dir.path(), &["estimate", "-i", "nowhere.iq"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["exit_code"], 3);
}

#[test]
fn unknown_model_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsound(dir.path(), &["model", "eval", "--model", "rural", "--tau", "1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn clean_hilly_pipeline_matches_model() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        fmsound(dir.path(), &["--json", "pipeline", "--model", "hilly", "--snr-db", "99", "--seed", "1", "-o", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rmse = report["comparison"]["rmse_db"].as_f64().unwrap();
    assert!(rmse <= 0.5, "rmse {rmse}");
    for f in [
        "seq.json",
        "tx.iq",
        "tx.iqmeta.json",
        "rx.iq",
        "rx.iqmeta.json",
        "pdp.csv",
        "pdp.meta.json",
        "compare.csv",
        "report.json",
    ] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn pipeline_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = fmsound(
            dir.path(),
            &["pipeline", "--model", "bad-urban", "--reps", "40", "--fading", "block-rayleigh", "-o", name],
        );
        assert!(out.status.success());
    }
    for f in ["rx.iq", "rx.iqmeta.json", "pdp.csv", "report.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn stepwise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |args: &[&str]| {
        let out = fmsound(d, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["generate", "--reps", "60", "-o", "tx.iq"]);
    run(&[
        "emulate", "--model", "hilly", "--min-db", "-40", "--snr-db", "30", "--seed", "42", "-i", "tx.iq", "-o",
        "rx.iq",
    ]);
    run(&["estimate", "-i", "rx.iq", "--seq", "seq.json", "--window-us", "100", "-o", "pdp.csv"]);
    let m = run(&["--json", "metrics", "-i", "pdp.csv", "--threshold-db", "6", "--x-db", "25"]);
    let metrics: serde_json::Value = serde_json::from_slice(&m.stdout).unwrap();
    assert!(metrics["n_taps"].as_u64().unwrap() >= 9);
    let c = run(&["--json", "compare", "--pdp", "pdp.csv", "--model", "hilly"]);
    let hilly: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    let c = run(&["--json", "compare", "--pdp", "pdp.csv", "--model", "bad-urban"]);
    let bu: serde_json::Value = serde_json::from_slice(&c.stdout).unwrap();
    assert!(hilly["rmse_db"].as_f64().unwrap() < bu["rmse_db"].as_f64().unwrap());
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fmsound"))
        .current_dir(dir.path())
        .env("FMSOUND_OUT_DIR", "exports")
        .args(["model", "export", "--model", "hilly", "--spacing", "0.5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("exports").join("hilly.csv")).unwrap();
    assert!(csv.starts_with("delay_us,power_db\n"));
    assert_eq!(csv.lines().count(), 1 + 61);
}

#[test]
fn import_csv_capture() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("iq.csv"), "i,q\n1,0\n0,-1\n0.5,0.25\n").unwrap();
    let out = fmsound(dir.path(), &["import-csv", "-i", "iq.csv", "--sample-rate", "1e6", "-o", "cap.iq"]);
    assert!(out.status.success());
    assert_eq!(std::fs::metadata(dir.path().join("cap.iq")).unwrap().len(), 24);
    let meta = std::fs::read_to_string(dir.path().join("cap.iqmeta.json")).unwrap();
    assert!(meta.contains("\"imported\""));
}

#[test]
fn custom_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"name":"two-ray","floor_db":-60,"max_delay_us":10,
        "segments":[{"kind":"constant_db","level":0,"tau_lo":0,"tau_hi":1},
                    {"kind":"constant_db","level":-6,"tau_lo":5,"tau_hi":6}]}"#;
    std::fs::write(dir.path().join("two.json"), cfg).unwrap();
    let out = fmsound(dir.path(), &["model", "eval", "--model", "two.json", "--tau", "5.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).trim(), "-6");
}
