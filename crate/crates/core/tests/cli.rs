use std::path::Path;
use std::process::{Command, Output};

fn skorohod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skorohod"))
        .args(args)
        .env_remove("SKOROHOD_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_WZ: &str = r#"
experiment = "wz_convergence"
seed = 5

[domain]
kind = "half_space"
params = { normal = [1.0], offset = 0.0 }

[coefficients]
sigma = "sin"
base = 0.5
slope = 0.25

[params]
x0 = [0.0]
levels = [2, 3, 4]
paths = 60
fine_level = 9
"#;

#[test]
fn list_prints_the_catalog() {
    let out = skorohod(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 9);
    let json = skorohod(&["list", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    for (line, name) in text.lines().zip(&names) {
        assert!(line.starts_with(name));
    }
    assert!(v[0]["anchor"].as_str().is_some());
}

#[test]
fn dry_run_validates_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "wz.toml", SMALL_WZ);
    let out_dir = dir.path().join("out");
    let out = skorohod(&["run", &cfg, "--dry-run", "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(!out_dir.exists());
    let echoed = String::from_utf8(out.stdout).unwrap();
    assert!(echoed.contains("substeps = 4"), "{echoed}");
}

#[test]
fn run_writes_reports_identical_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "wz.toml", SMALL_WZ);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let ra = skorohod(&["run", &cfg, "--workers", "1", "--output", a.to_str().unwrap()]);
    let rb = skorohod(&["run", &cfg, "--workers", "4", "--output", b.to_str().unwrap()]);
    assert!(matches!(ra.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(ra.status.code(), rb.status.code());
    for f in ["report.json", "estimates.csv", "resolved_config.toml"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let ja = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ja, std::fs::read(b.join("report.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    let levels = report["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["label"].as_str().unwrap().starts_with("sup_error n="))
        .count();
    assert_eq!(levels, 3);
    for key in ["name", "parameters", "estimates", "rate_fit", "verdict", "seeds"] {
        assert!(report.get(key).is_some(), "{key}");
    }
}

#[test]
fn seed_flag_and_overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "wz.toml", SMALL_WZ);
    let a = dir.path().join("a");
    skorohod(&["run", &cfg, "--seed", "99", "--set", "params.paths=20", "--output", a.to_str().unwrap()]);
    let resolved = std::fs::read_to_string(a.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 99"));
    assert!(resolved.contains("paths = 20"));
}

#[test]
fn negative_delta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ac.toml",
        r#"
experiment = "approx_continuity"
[domain]
kind = "half_space"
params = { normal = [1.0], offset = 0.0 }
[coefficients]
sigma = "const"
base = 0.5
[params]
x0 = [1.0]
epsilon = 0.3
deltas = [-1.0]
"#,
    );
    let out = skorohod(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("deltas"));
}

#[test]
fn unknown_key_and_missing_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &format!("{SMALL_WZ}speed = 1\n"));
    let out = skorohod(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speed"));
    let out = skorohod(&["run", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn narrow_tube_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "tube.toml",
        r#"
experiment = "regulator_conditional"
[domain]
kind = "half_space"
params = { normal = [1.0], offset = 0.0 }
[coefficients]
sigma = "const"
[params]
x0 = [0.1]
deltas = [0.05]
c3 = 0.35
epsilon = 0.5
pilot_attempts = 200
"#,
    );
    let out = skorohod(&["run", &cfg, "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pilot acceptance"));
}

#[test]
fn failing_verdict_exits_one_and_cloud_is_exported() {
    let dir = tempfile::tempdir().unwrap();
    let disc = r#"
[domain]
kind = "ball"
params = { center = [0.0, 0.0], radius = 1.0 }
[coefficients]
sigma = "const"
d = 2
d1 = 2
"#;
    let sub = write(
        dir.path(),
        "sub.toml",
        &format!("experiment = \"submartingale_test\"\n{disc}[params]\nx0 = [0.0, 0.0]\nu = {{ kind = \"norm_squared\", scale = -1.0 }}\npaths = 500\nsteps = 64\n"),
    );
    let out = skorohod(&["run", &sub, "--output", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let mp = write(
        dir.path(),
        "mp.toml",
        &format!("experiment = \"max_principle\"\n{disc}[params]\nx0 = [0.0, 0.0]\nu = {{ kind = \"norm_squared\" }}\ncontrols = 50\n"),
    );
    let o = dir.path().join("m");
    let out = skorohod(&["run", &mp, "--output", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(o.join("cloud.csv")).unwrap();
    assert!(csv.starts_with("y1,y2,t0,control_id\n"));
    assert_eq!(csv.lines().count(), 51);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(o.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "premise_not_met");
}
