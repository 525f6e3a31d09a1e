use std::path::Path;
use std::process::{Command, Output};

fn surrogates(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_surrogates"));
    cmd.args(args).env_remove("SURROGATES_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("SURROGATES_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SHORT_RSK: &str = r#"{"kind": "rsk", "rsk": {"steps": 10, "eval_every": 5}}"#;

#[test]
fn run_writes_a_report_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_RSK);
    let out = dir.path().join("out");
    let o = surrogates(
        &["run", &cfg, "--seed", "4", "--out", out.to_str().unwrap(), "--override", "rsk.steps=6", "--override", "rsk.eval_every=3"],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 4);
    assert_eq!(report["config"]["rsk"]["steps"], 6);
    assert_eq!(report["series"]["epochs"], serde_json::json!([3, 6]));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let env_dir = dir.path().join("env");
    let cfg_dir = dir.path().join("cfg");
    let flag_dir = dir.path().join("flag");

    let plain = write_config(dir.path(), SHORT_RSK);
    assert_eq!(surrogates(&["run", &plain], Some(&env_dir)).status.code(), Some(0));
    assert!(env_dir.join("report.json").exists());

    let with_output = write_config(
        dir.path(),
        &format!(r#"{{"kind": "rsk", "output": {:?}, "rsk": {{"steps": 5, "eval_every": 5}}}}"#, cfg_dir.to_str().unwrap()),
    );
    assert_eq!(surrogates(&["run", &with_output], Some(&env_dir)).status.code(), Some(0));
    assert!(cfg_dir.join("report.json").exists());

    let o = surrogates(&["run", &with_output, "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("report.json").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kind": "rsk", "rsk": {"tau2": -1}}"#);
    let o = surrogates(&["run", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rsk.tau2"));

    let o = surrogates(&["run", dir.path().join("absent.json").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));

    let cfg = write_config(dir.path(), SHORT_RSK);
    let o = surrogates(&["run", &cfg, "--override", "rsk.unknown=3"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numeric_aborts_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_RSK);
    let o = surrogates(&["run", &cfg, "--override", "rsk.optimizer.lr=1e300", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gradcheck_and_oracles_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = surrogates(&["gradcheck", "--override", "checks.gradcheck_instances=2", "--out", out], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS] gradcheck.esupcon_loss"));

    let o = surrogates(
        &["oracles", "--override", "checks.iou_pairs=2", "--override", "checks.iou_samples=200000", "--override", "checks.edit_pairs=100", "--out", out],
        None,
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("edit.dp_vs_naive_mismatches"));
    assert!(stdout.contains("[PASS] iou.offset_square"));
    assert!(matches!(o.status.code(), Some(0) | Some(3)));
}
