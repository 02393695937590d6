use std::path::Path;
use std::process::Command as Proc;

use bifol::cli::{run_command, Command, Overrides, RunConfig, Status};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_bifol");

fn bifol(dir: &Path, config: &str, args: &[&str]) -> (i32, Value) {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    let out = Proc::new(BIN).arg(args[0]).arg("--config").arg(&path).args(&args[1..]).output().unwrap();
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), json)
}

const ROTNUM: &str = r#"
schema_version = 1
[circle.quarter]
family = "rotation"
theta = 0.25
[rotnum]
map = "quarter"
iterations = 100
"#;

#[test]
fn rotnum_quarter_rotation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, r) = bifol(dir.path(), ROTNUM, &["rotnum", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let e = &r["payload"]["enclosure"];
    assert!((e["lo"].as_f64().unwrap() - 0.24).abs() < 1e-15);
    assert!((e["hi"].as_f64().unwrap() - 0.26).abs() < 1e-15);
    assert_eq!(r["status"], "ok");
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(out.join("rotnum.json")).unwrap()).unwrap();
    assert_eq!(saved["payload"], r["payload"]);
    // only the report itself; the temporary was renamed away
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 1);
}

#[test]
fn straighten_linear_pair_is_identity() {
    let cfg = r#"
schema_version = 1
[foliation.a]
kind = "linear"
direction = [1.0, 0.4142135623730951]
[foliation.b]
kind = "linear"
direction = [1.0, -0.7320508075688772]
[bifoliation.pair]
alpha = "a"
beta = "b"
[straighten]
pair = "pair"
params = { resolution = 32, leaf_budget = 400.0 }
"#;
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = bifol(dir.path(), cfg, &["straighten"]);
    assert_eq!(code, 0);
    assert_eq!(r["payload"]["summary"], "identity within 1e-9");
    assert_eq!(r["payload"]["phi"]["identity"]["holds"], true);
}

#[test]
fn short_cycle_budget_is_a_computation_error() {
    let cfg = r#"
schema_version = 1
[foliation.l]
kind = "linear"
direction = [1.0, 0.4142135623730951]
[cycle]
foliation = "l"
t_max = 5.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = bifol(dir.path(), cfg, &["cycle"]);
    assert_eq!(code, 3);
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["stage"], "cycle");
}

#[test]
fn validation_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cyclic = r#"
schema_version = 1
[circle.a]
family = "inverse"
of = "b"
[circle.b]
family = "inverse"
of = "a"
[rotnum]
map = "a"
iterations = 10
"#;
    let (code, r) = bifol(dir.path(), cyclic, &["rotnum"]);
    assert_eq!(code, 2);
    assert!(r["error"]["message"].as_str().unwrap().contains("cyclic"));
    let dangling = ROTNUM.replace("map = \"quarter\"", "map = \"nowhere\"");
    assert_eq!(bifol(dir.path(), &dangling, &["rotnum"]).0, 2);
    let version = ROTNUM.replace("schema_version = 1", "schema_version = 7");
    assert_eq!(bifol(dir.path(), &version, &["rotnum"]).0, 2);
    let range = ROTNUM.replace("iterations = 100", "iterations = 0");
    assert_eq!(bifol(dir.path(), &range, &["rotnum"]).0, 2);
    assert_eq!(bifol(dir.path(), ROTNUM, &["cycle"]).0, 2);
}

#[test]
fn unknown_command_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bifol(dir.path(), ROTNUM, &["frobnicate"]).0, 64);
    assert_eq!(bifol(dir.path(), ROTNUM, &["rotnum", "--no-such-flag"]).0, 64);
}

const NEGATIVE: &str = r#"
schema_version = 1
seed = 5
[grid.psi]
kind = "shear"
resolution = 64
a = 0.05656854249492381
b = 0.05656854249492381
[grid.id]
kind = "identity"
resolution = 64
[foliation.a0]
kind = "linear"
direction = [1.0, 0.4142135623730951]
[foliation.b0]
kind = "linear"
direction = [1.0, -0.7320508075688772]
[foliation.alpha]
kind = "pushforward"
base = "a0"
map = "psi"
[foliation.beta]
kind = "pushforward"
base = "b0"
map = "psi"
[bifoliation.sheared]
alpha = "alpha"
beta = "beta"
[verify]
pair = "sheared"
phi = "id"
targets = [[1.0, 0.4142135623730951], [1.0, -0.7320508075688772]]
samples = 16
"#;

#[test]
fn strict_mode_turns_flags_into_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let (code, r) = bifol(dir.path(), NEGATIVE, &["verify"]);
    assert_eq!(code, 0);
    assert_eq!(r["status"], "degraded");
    assert_eq!(r["quality_flags"][0]["flag"], "verification_failed");
    assert_eq!(bifol(dir.path(), NEGATIVE, &["verify", "--strict"]).0, 4);
}

#[test]
fn seed_override_and_payload_determinism() {
    let cfg = RunConfig::parse(NEGATIVE).unwrap();
    let run = |seed| run_command(&cfg, NEGATIVE, Command::Verify, &Overrides { seed, out_dir: None });
    let (a, b) = (run(None), run(None));
    assert_eq!(a.status, Status::Degraded);
    assert_eq!(a.deterministic_json(), b.deterministic_json());
    let c = run(Some(99));
    assert_eq!(c.inputs.seed, 99);
    assert_ne!(a.payload, c.payload);
}

#[test]
fn threads_flag_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bifol(dir.path(), ROTNUM, &["rotnum", "--threads", "1", "--seed", "3"]).0, 0);
    assert_eq!(bifol(dir.path(), ROTNUM, &["rotnum", "--threads", "0"]).0, 64);
}
