use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn rwis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rwis"))
        .args(args)
        .env_remove("RWIS_OUT_DIR")
        .output()
        .unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn validate_builtin_succeeds() {
    let dir = scratch("validate");
    let o = rwis(&["validate", "--model", "simple2d", "--out", &out_arg(&dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("validate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().skip(1).all(|l| l.contains(",true,")));
}

#[test]
fn validate_drifting_model_fails_with_json() {
    let dir = scratch("validate-drift");
    let o = rwis(&["validate", "--model", "drift1d", "--out", &out_arg(&dir)]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "validation_failed");
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn sigma_matches_library() {
    let dir = scratch("sigma");
    let o = rwis(&["sigma", "--model", "persistent1d", "--out", &out_arg(&dir)]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("sigma.json")).unwrap()).unwrap();
    let lib = rwis::model::persistent1d(0.7).unwrap().asymptotic_covariance().unwrap()[(0, 0)];
    assert_eq!(v["sigma"][0][0].as_f64().unwrap(), lib);
}

#[test]
fn config_errors_report_position() {
    let dir = scratch("bad-config");
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, "seed = 3\n[duet]\ntrials = \"many\"\n").unwrap();
    let o = rwis(&["validate", "--config", cfg.to_str().unwrap(), "--out", &out_arg(&dir)]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(e["error"]["line"], 3);
    assert_eq!(e["error"]["column"], 10);
}

#[test]
fn model_file_errors_report_position() {
    let dir = scratch("bad-model");
    let model = dir.join("m.toml");
    fs::write(&model, "dim = 1\nstates = 1\nrate = 1.0\n[[jump]]\nx = [1]\nrows = [[0.5]]\n").unwrap();
    let o = rwis(&["validate", "--model", model.to_str().unwrap(), "--out", &out_arg(&dir)]);
    let e = stderr_json(&o);
    assert_eq!(e["error"]["kind"], "model_file");
    assert_eq!(e["error"]["line"], 6);
}

#[test]
fn usage_errors_are_json() {
    let o = rwis(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"]["kind"], "usage");
}

#[test]
fn environment_sets_output_directory() {
    let dir = scratch("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_rwis"))
        .args(["validate", "--model", "simple1d"])
        .env("RWIS_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.join("validate.csv").exists());
}

#[test]
fn manifest_checksums_match_outputs() {
    let dir = scratch("manifest");
    let o = rwis(&["renewal", "--trials", "200", "--times", "1e3,1e6", "--seed", "5", "--out", &out_arg(&dir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["renewal"]["trials"], 200);
    for f in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(dir.join(f["file"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(f["sha256"].as_str().unwrap(), hex);
    }
    assert!(!m["streams"].as_array().unwrap().is_empty());
}

fn duet_csv(dir: &Path, workers: &str, seed: &str) -> Vec<u8> {
    let o = rwis(&[
        "simulate-duet", "--t", "300", "--trials", "40", "--seed", seed, "--workers", workers, "--out", &out_arg(dir),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read(dir.join("duet.csv")).unwrap()
}

#[test]
fn fixed_seed_is_byte_identical() {
    let a = duet_csv(&scratch("det-a"), "1", "11");
    let b = duet_csv(&scratch("det-b"), "1", "11");
    assert_eq!(a, b);
    let c = duet_csv(&scratch("det-c"), "2", "11");
    assert_eq!(a, c);
    let d = duet_csv(&scratch("det-d"), "1", "12");
    assert_ne!(a, d);
}

#[test]
fn saved_config_reproduces_run() {
    let first = scratch("replay-a");
    let a = duet_csv(&first, "1", "21");
    let second = scratch("replay-b");
    let o = rwis(&[
        "simulate-duet",
        "--config",
        first.join("config.toml").to_str().unwrap(),
        "--out",
        &out_arg(&second),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(a, fs::read(second.join("duet.csv")).unwrap());
}

#[test]
fn mixture_test_consumes_duet_output() {
    let dir = scratch("mixture");
    duet_csv(&dir, "1", "3");
    let fit = dir.join("fit");
    let o = rwis(&[
        "mixture-test",
        "--input",
        dir.join("duet.csv").to_str().unwrap(),
        "--permutations",
        "19",
        "--out",
        &out_arg(&fit),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(fit.join("mixture_fit.json")).unwrap()).unwrap();
    let p = v["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
    assert_eq!(v["n_sim"], 40);
}

#[test]
fn llt_and_return_tail_emit_documented_columns() {
    let dir = scratch("columns");
    let o = rwis(&["llt-check", "--model", "simple1d", "--times", "50,100", "--out", &out_arg(&dir)]);
    assert!(o.status.success());
    assert!(fs::read_to_string(dir.join("llt.csv")).unwrap().starts_with("t,error_sum\n"));
    let o = rwis(&["return-tail", "--model", "simple2d", "--times", "10,100", "--trials", "300", "--out", &out_arg(&dir)]);
    assert!(o.status.success());
    assert!(fs::read_to_string(dir.join("return_tail.csv"))
        .unwrap()
        .starts_with("t,survivors,tail_est,tail_est_times_log,ci_lo,ci_hi\n"));
}
