use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn homlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homlab"))
        .args(args)
        .env_remove("HOMLAB_OUT")
        .output()
        .expect("binary runs")
}

fn write_manifest(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("manifest.json");
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(dir: &Path, v: &Value) -> (Output, PathBuf) {
    let out = dir.join("out");
    let m = write_manifest(dir, v);
    let o = homlab(&["run", "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (o, out)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn sine_field() -> Value {
    json!({"kind": "scalar_trig", "d": 1, "mean": 2.0, "terms": [{"freq": [1.0], "sin": 1.0}]})
}

fn homogenize_manifest() -> Value {
    json!({
        "command": "homogenize",
        "seed": 3,
        "field": sine_field(),
        "params": {"t": [64.0], "h": 0.00390625}
    })
}

#[test]
fn homogenize_matches_harmonic_mean() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), &homogenize_manifest());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v = read_json(&out.join("homogenize.json"));
    let a = v["payload"]["rows"][0]["a_hat"]["entries"][0][0][0][0].as_f64().unwrap();
    assert!((a - 3f64.sqrt()).abs() <= 1e-3, "{a}");
    assert_eq!(v["provenance"]["seed"], 3);
    assert_eq!(v["provenance"]["manifest_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["provenance"]["version"], env!("CARGO_PKG_VERSION"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("homogenize.json"));
}

#[test]
fn missing_seed_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = homogenize_manifest();
    m.as_object_mut().unwrap().remove("seed");
    let (o, out) = run(dir.path(), &m);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let err: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(err["error"]["kind"], "schema");
}

#[test]
fn constant_rate_is_floor_limited() {
    let dir = tempfile::tempdir().unwrap();
    let m = json!({
        "command": "rate",
        "seed": 1,
        "field": {"kind": "scalar_constant", "d": 1, "value": 2.0},
        "params": {"eps": [0.125, 0.0625, 0.03125, 0.015625]}
    });
    let (o, out) = run(dir.path(), &m);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("floor-limited"));
    let v = read_json(&out.join("rate.json"));
    assert_eq!(v["payload"]["floor_limited"], true);
    let csv = std::fs::read_to_string(out.join("rate.csv")).unwrap();
    let mut lines = csv.split("\r\n");
    assert!(lines.next().unwrap().ends_with("manifest_sha256,seed,version"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let l2: f64 = row[3].parse().unwrap();
    assert!(l2 < 1e-8);
    assert_eq!(row[row.len() - 2], "1");
}

#[test]
fn immediate_reproduce_passes_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), &homogenize_manifest());
    assert!(o.status.success());
    let r = homlab(&["reproduce", out.join("homogenize.json").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stdout));
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["report"]["difference_count"], 0);
}

#[test]
fn reproduce_with_new_seed_reports_drift() {
    let dir = tempfile::tempdir().unwrap();
    let m = json!({
        "command": "rho",
        "seed": 5,
        "field": {
            "kind": "scalar_quasi_periodic",
            "directions": [[1.0, "phi"]],
            "mean": 2.0,
            "terms": [{"freq": [1, 0], "cos": 0.5}, {"freq": [0, 1], "cos": 0.5}]
        },
        "params": {
            "radii": [4.0, 8.0],
            "budget": {"y_samples": 4, "y_half_width": 50.0, "z_spacing": 0.0625, "test_points": 64, "test_half_width": 8.0}
        }
    });
    let (o, out) = run(dir.path(), &m);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let result = out.join("rho.json");
    assert_eq!(homlab(&["reproduce", result.to_str().unwrap()]).status.code(), Some(0));
    let r = homlab(&["reproduce", result.to_str().unwrap(), "--seed", "6"]);
    assert_eq!(r.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert!(v["error"]["drift"]["difference_count"].as_u64().unwrap() > 0);
}

#[test]
fn tampered_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = run(dir.path(), &homogenize_manifest());
    let p = out.join("homogenize.json");
    let mut v = read_json(&p);
    v["manifest"]["params"]["h"] = json!(0.0078125);
    std::fs::write(&p, v.to_string()).unwrap();
    assert_eq!(homlab(&["reproduce", p.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn compute_failure_exits_3_and_marks_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    // h > T/64 passes the schema but is refused by the solver.
    let m = json!({
        "command": "corrector",
        "seed": 1,
        "field": sine_field(),
        "params": {"t": [16.0], "h": 0.5}
    });
    let (o, out) = run(dir.path(), &m);
    assert_eq!(o.status.code(), Some(3));
    let v = read_json(&out.join("FAILED.json"));
    assert_eq!(v["status"], "partial");
    assert_eq!(v["payload"]["error"]["kind"], "compute");
}

#[test]
fn discrepancy_bound_dominates() {
    let dir = tempfile::tempdir().unwrap();
    let m = json!({
        "command": "discrepancy",
        "seed": 0,
        "params": {"points": {"kind": "lattice", "alpha": "phi"}, "n": [100, 400], "h": [4, 16]}
    });
    let (o, out) = run(dir.path(), &m);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(read_json(&out.join("discrepancy.json"))["payload"]["bound_dominates"], true);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), &homogenize_manifest());
    let out = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_homlab"))
        .args(["run", "--manifest", m.to_str().unwrap(), "--threads", "2"])
        .env("HOMLAB_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("homogenize.json").exists());
}
