use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use polyflow::snapshot::{read_any, write_field, write_trajectory};
use polyflow::{Field, GridSpec};

fn polyflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyflow"))
        .current_dir(dir)
        .env_remove("POLYFLOW_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout))
    })
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn verify_with_defaults_succeeds() {
    let dir = TempDir::new().unwrap();
    let o = polyflow(dir.path(), &["verify", "--out", "v"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = stdout_json(&o);
    assert_eq!(doc["command"], "verify");
    for key in ["smoothing", "distance", "s_bound", "picard", "constraint", "dissipation", "contraction"] {
        assert!(doc["result"].get(key).is_some(), "missing {key}");
    }
    for csv in ["verify_smoothing.csv", "verify_distance.csv", "verify_s_bound.csv", "verify_constraint.csv"] {
        assert!(dir.path().join("v").join(csv).is_file(), "{csv}");
    }
}

#[test]
fn picard_on_constant_data_converges_at_once() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"schema_version": 1, "initial": {"bank": "constant_tilted"}}"#);
    let o = polyflow(dir.path(), &["picard", "--config", &cfg, "--out", "o"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &stdout_json(&o)["result"];
    assert_eq!(r["status"], "converged");
    assert_eq!(r["iterations"], 1);
}

#[test]
fn negative_horizon_exits_2_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"flow": {"t_final": -0.5}}"#);
    let o = polyflow(dir.path(), &["picard", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flow.t_final"));
    assert_eq!(stdout_json(&o)["fields"][0]["field"], "flow.t_final");
    assert!(!dir.path().join("polyflow-out").exists(), "nothing runs on an invalid config");
}

#[test]
fn unknown_keys_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"grid": {"points": 64, "pionts": 32}}"#);
    let o = polyflow(dir.path(), &["evolve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pionts"));
}

#[test]
fn non_finite_initial_data_exit_3() {
    let dir = TempDir::new().unwrap();
    let spec = GridSpec::new(1, 2.0 * std::f64::consts::PI * 8.0, 64).unwrap();
    let f = Field::constant(spec, &[0.0, 0.0, 1.0], 0.0);
    let mut bytes = Vec::new();
    write_field(&mut bytes, &f).unwrap();
    // overwrite the last sample with NaN
    let n = bytes.len();
    bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    std::fs::write(dir.path().join("nan.pfld"), bytes).unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"initial": {"snapshot": "nan.pfld"}}"#);
    let o = polyflow(dir.path(), &["picard", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn summaries_are_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let a = polyflow(dir.path(), &["probe", "--seed", "11", "--out", "a"]);
    let b = polyflow(dir.path(), &["probe", "--seed", "11", "--out", "b"]);
    let c = Command::new(env!("CARGO_BIN_EXE_polyflow"))
        .current_dir(dir.path())
        .env("POLYFLOW_THREADS", "2")
        .args(["probe", "--seed", "11", "--out", "c"])
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let other = polyflow(dir.path(), &["probe", "--seed", "12", "--out", "d"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn snapshots_feed_back_into_norms_and_initial_data() {
    let dir = TempDir::new().unwrap();
    let o = polyflow(dir.path(), &["evolve", "--out", "run"]);
    assert_eq!(o.status.code(), Some(0));
    let path = dir.path().join("run/evolve.ptrj");
    let bytes = std::fs::read(&path).unwrap();
    let traj = read_any(&bytes).unwrap();
    let mut again = Vec::new();
    write_trajectory(&mut again, &traj).unwrap();
    assert_eq!(bytes, again, "bit-exact round trip");

    let n = polyflow(dir.path(), &["norms", "--input", "run/evolve.ptrj", "--out", "n"]);
    assert_eq!(n.status.code(), Some(0));
    assert!(stdout_json(&n)["result"]["x_norm"].as_f64().unwrap() > 0.0);

    let cfg = write(dir.path(), "c.json", r#"{"initial": {"snapshot": "run/evolve.ptrj"}, "flow": {"steps": 16}}"#);
    let p = polyflow(dir.path(), &["picard", "--config", &cfg, "--out", "p"]);
    assert_eq!(p.status.code(), Some(0), "{}", String::from_utf8_lossy(&p.stderr));
}

#[test]
fn kernel_tables_have_headers() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "k.json", r#"{"kernel": {"orders": [2], "x_max": 12.0, "dx": 0.1}}"#);
    let o = polyflow(dir.path(), &["kernel", "--config", &cfg, "--out", "k"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("k/kernel_profile_m2.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x,d0g,d1g,d2g");
    assert_eq!(text.lines().count(), 1 + 121);
    let decay = std::fs::read_to_string(dir.path().join("k/kernel_decay.csv")).unwrap();
    assert_eq!(decay.lines().count(), 1 + 3);
}
