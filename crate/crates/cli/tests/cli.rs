use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pircsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pircsi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn dir_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn capacity_values() {
    let o = pircsi(&["capacity", "--model", "I", "-N", "2", "-K", "9", "-M", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "4/7 ≈ 0.571429");
    let o = pircsi(&["capacity", "--model", "II", "-N", "2", "-K", "10", "-M", "4"]);
    assert!(stdout(&o).starts_with("2/3"));
    let o = pircsi(&["capacity", "--model", "II", "-N", "2", "-K", "4", "-M", "4"]);
    assert_eq!(stdout(&o).trim(), "1");
}

#[test]
fn capacity_range_is_usage_error() {
    let o = pircsi(&["capacity", "--model", "II", "-N", "2", "-K", "4", "-M", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2 <= M <= K"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(pircsi(&["capacity", "--model", "III", "-N", "2", "-K", "4", "-M", "1"]).status.code(), Some(1));
    assert_eq!(pircsi(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pircsi(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_k9_m3() {
    let dir = tempfile::tempdir().unwrap();
    let o = pircsi(&[
        "run", "--model", "I", "-N", "2", "-K", "9", "-M", "3", "-q", "3", "--seed", "5", "--trials", "3", "--out",
        dir_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("recovered 3/3"));
    assert!(out.contains("downloaded 14 symbols for 8-symbol messages"));
    assert!(out.contains("measured rate 4/7"));
    assert!(out.contains("match true"));
    for t in 0..3 {
        let text = fs::read_to_string(dir.path().join(format!("transcript-5-{t}.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["downloaded_symbols"], 14);
    }
}

#[test]
fn run_zero_trials_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = pircsi(&[
        "run", "--model", "I", "-N", "2", "-K", "3", "-M", "1", "--trials", "0", "--out", dir_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        vec![
            "run".to_string(), "--model".into(), "II".into(), "-N".into(), "2".into(), "-K".into(), "5".into(),
            "-M".into(), "3".into(), "--seed".into(), "42".into(), "--trials".into(), "4".into(), "--out".into(),
            d.to_str().unwrap().into(),
        ]
    };
    let mut pa = args(a.path());
    pa.push("--parallel".into());
    let oa = pircsi(&pa.iter().map(String::as_str).collect::<Vec<_>>());
    let ob = pircsi(&args(b.path()).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(stdout(&oa), stdout(&ob));
    for t in 0..4 {
        let name = format!("transcript-42-{t}.json");
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn audit_exhaustive_pair() {
    let dir = tempfile::tempdir().unwrap();
    let o = pircsi(&[
        "audit", "--model", "II", "-N", "2", "-K", "3", "-M", "2", "-q", "3", "--exhaustive", "--out",
        dir_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("max deviation 0/1"));
    let text = fs::read_to_string(dir.path().join("audit-II-N2-K3-M2-q3.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["max_deviation"], "0/1");
    assert_eq!(v["status"], "exact");
    for server in v["per_server_posteriors"].as_array().unwrap() {
        for class in server["classes"].as_array().unwrap() {
            assert_eq!(class["posterior"], serde_json::json!(["1/3", "1/3", "1/3"]));
        }
    }
}

#[test]
fn audit_broken_distribution_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = pircsi(&[
        "audit", "--model", "I", "-N", "2", "-K", "3", "-M", "1", "-q", "2", "--exhaustive",
        "--broken-distribution", "--out", dir_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(dir.path().join("audit-I-N2-K3-M1-q2-broken.json").exists());
}

#[test]
fn audit_oversized_exhaustive_hits_cap() {
    let dir = tempfile::tempdir().unwrap();
    let o = pircsi(&[
        "audit", "--model", "I", "-N", "2", "-K", "9", "-M", "3", "--exhaustive", "--out", dir_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--sampled"));
}

#[test]
fn audit_sampled() {
    let dir = tempfile::tempdir().unwrap();
    let o = pircsi(&[
        "audit", "--model", "II", "-N", "2", "-K", "10", "-M", "4", "--sampled", "--samples", "20000", "--out",
        dir_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("audit-II-N2-K10-M4-q3.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["status"], "sampled");
    assert!(v.get("max_deviation").is_none());
}

#[test]
fn bench_grids() {
    let dir = tempfile::tempdir().unwrap();
    let o = pircsi(&["bench", "--trials", "2", "--parallel", "--out", dir_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("N,K,M,model,measured_rate,capacity,match"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 105);
    assert!(rows.iter().all(|r| r.ends_with(",true")));

    let o = pircsi(&["bench", "--grid", "K=4..3", "--out", dir_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv, "N,K,M,model,measured_rate,capacity,match\n");

    let o = pircsi(&["bench", "--grid", "N=oops", "--out", dir_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}
