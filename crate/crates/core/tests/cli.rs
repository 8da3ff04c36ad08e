use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nse3d::io::{CsvTable, RunManifest};

const CONFIG: &str = r#"
[grid]
N = 16
L = 1.0

[solver]
nu = 0.1
dt = 1e-3
t_end = 0.02
snapshot_stride = 5
diag_stride = 5
transient = 0.0

[forcing]
kind = "abc"
amplitude = 2.0

[diagnostics]
delta = 0.5
c0 = 100.0
window_T = 0.01

[initial]
kind = "random"
seed = 3
k_peak = 2.0
energy = 0.5
"#;

fn nse3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nse3d"))
        .args(args)
        .env("NSE3D_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> serde_json::Value {
    let out = nse3d(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON summary")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn zero_duration_run_has_one_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        &CONFIG.replace("t_end = 0.02", "t_end = 0.0"),
    );
    let run = tmp.path().join("run");
    let summary = ok(&["simulate", "--config", s(&cfg), "--out", s(&run)]);
    assert_eq!(summary["snapshots"], 1);
    assert_eq!(summary["steps"], 0);
    let m = RunManifest::load(&run).unwrap();
    assert_eq!(m.snapshots().count(), 1);
    assert!(ok(&["verify", "--run", s(&run)])
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn simulate_oracle_and_diagnose_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", CONFIG);
    let run = tmp.path().join("run");
    let summary = ok(&["simulate", "--config", s(&cfg), "--out", s(&run)]);
    assert_eq!(summary["steps"], 20);
    assert_eq!(summary["snapshots"], 5);

    let report = ok(&["oracle", "--run", s(&run)]);
    assert_eq!(report["checked"], 5);
    assert!(report["mismatches"].as_array().unwrap().is_empty());

    let table = CsvTable::read(&run.join("diagnostics.csv")).unwrap();
    let hash = table.config_hash.clone().expect("hash comment line");
    assert_eq!(hash, summary["config_hash"].as_str().unwrap());
    let text = fs::read_to_string(run.join("windows.csv")).unwrap();
    assert!(text.starts_with(&format!("# config_hash={hash}")));

    let snaps = run.join("snapshots");
    let (d1, d2) = (tmp.path().join("d1"), tmp.path().join("d2"));
    ok(&[
        "diagnose",
        "--config",
        s(&cfg),
        "--snapshots",
        s(&snaps),
        "--out",
        s(&d1),
    ]);
    ok(&[
        "diagnose",
        "--config",
        s(&cfg),
        "--snapshots",
        s(&snaps),
        "--out",
        s(&d2),
    ]);
    for f in ["diagnostics.csv", "windows.csv"] {
        assert_eq!(
            fs::read(d1.join(f)).unwrap(),
            fs::read(d2.join(f)).unwrap(),
            "{f}"
        );
    }
    // diagnose from snapshots reproduces the simulate-time Q column
    let again = CsvTable::read(&d1.join("diagnostics.csv")).unwrap();
    assert_eq!(again.floats("Q").unwrap(), table.floats("Q").unwrap());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", CONFIG);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b)]);
    for f in ["diagnostics.csv", "windows.csv", "config.toml"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let (ma, mb) = (
        RunManifest::load(&a).unwrap(),
        RunManifest::load(&b).unwrap(),
    );
    assert_eq!(ma.files, mb.files);
}

#[test]
fn tampered_run_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", CONFIG);
    let run = tmp.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&run)]);
    let mut bytes = fs::read(run.join("diagnostics.csv")).unwrap();
    let last = bytes.len() - 2;
    bytes[last] ^= 1;
    fs::write(run.join("diagnostics.csv"), bytes).unwrap();
    let out = nse3d(&["verify", "--run", s(&run)]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("delta.toml", CONFIG.replace("delta = 0.5", "delta = 0.0")),
        (
            "unknown.toml",
            CONFIG.replace("[forcing]", "[forcing]\nbogus = 1"),
        ),
        ("syntax.toml", CONFIG.replace("N = 16", "N = ")),
    ];
    for (name, text) in cases {
        let cfg = write_config(tmp.path(), name, &text);
        let out = nse3d(&[
            "simulate",
            "--config",
            s(&cfg),
            "--out",
            s(&tmp.path().join(name)),
        ]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let line: serde_json::Value = serde_json::from_slice(&out.stderr).expect("JSON error line");
        assert_eq!(line["exit_code"], 2);
        assert!(line["error"].is_string() && line["message"].is_string());
    }
}

#[test]
fn sync_check_passes_on_small_run() {
    let tmp = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("t_end = 0.02", "t_end = 0.1") + "\n[sync]\nperturb_shell = 2\n";
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("sync");
    let summary = ok(&["sync", "--config", s(&cfg), "--out", s(&out), "--check"]);
    assert!(summary["records"].as_u64().unwrap() > 10);
    let table = CsvTable::read(&out.join("sync.csv")).unwrap();
    assert!(table
        .floats("w_Hs")
        .unwrap()
        .iter()
        .all(|w| w.is_some_and(f64::is_finite)));
}
