//! End-to-end runs of the `tensorspike` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tensorspike(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensorspike")).args(args).output().expect("spawn tensorspike")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_then_amp_recovers_signal_at_low_noise() {
    let dir = tempfile::tempdir().unwrap();
    let (y, x, out) = (dir.path().join("y.tns"), dir.path().join("x.csv"), dir.path().join("amp.json"));
    let gen = tensorspike(&[
        "--seed", "5", "--out", arg(&y), "gen", "--n", "40", "--p", "3", "--prior", "rademacher", "--delta", "0.05",
        "--truth-out", arg(&x),
    ]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let summary: Value = serde_json::from_slice(&gen.stdout).unwrap();
    assert_eq!(summary["result"]["entries"], 9880);

    let amp = tensorspike(&[
        "--out", arg(&out), "amp", "--in", arg(&y), "--prior", "rademacher", "--delta", "0.05", "--init",
        "informative", "--truth", arg(&x),
    ]);
    assert!(amp.status.success(), "{}", String::from_utf8_lossy(&amp.stderr));
    let v = json(&out);
    assert_eq!(v["schema"], "tensorspike/amp/v1");
    assert_eq!(v["result"]["converged"], true);
    let m = v["result"]["overlap"][0][0].as_f64().unwrap();
    assert!(m > 0.95, "overlap {m}");
}

#[test]
fn rerun_from_recorded_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let run = tensorspike(&["--out", arg(&first), "se", "--prior", "gaussian:0.2", "--p", "3", "--delta", "0.2"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    // The artifact itself is a valid config: its `config` member is used.
    let again = tensorspike(&["--config", arg(&first), "--out", arg(&second)]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[test]
fn command_line_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"command": "thresholds", "prior": "rademacher", "p": 3}"#).unwrap();
    let run = tensorspike(&["--config", arg(&cfg), "--format", "json", "thresholds", "--p", "4"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let v: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(v["config"]["p"], 4);
    let it = v["result"]["delta_it"].as_f64().unwrap();
    assert!((it - 0.1902).abs() < 5e-4, "{it}");
}

#[test]
fn exit_codes_distinguish_io_from_usage_errors() {
    let missing = tensorspike(&["amp", "--in", "/nonexistent/y.tns", "--prior", "rademacher", "--delta", "0.1"]);
    assert_eq!(missing.status.code(), Some(1));
    let bad_flag = tensorspike(&["se", "--no-such-flag"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    let bad_prior = tensorspike(&["se", "--prior", "bernoulli:1.5", "--p", "3", "--delta", "0.1"]);
    assert_eq!(bad_prior.status.code(), Some(2));
}

#[test]
fn csv_output_has_header_and_provenance() {
    let run = tensorspike(&["--format", "csv", "free-energy", "--prior", "rademacher", "--p", "3", "--delta", "0.3"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# config: ")));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.split(',').count() >= 2, "{header}");
}
