use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ampdu_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ampdu-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn preset_prints_loadable_toml() {
    let out = ampdu_sim(&["preset", "grid-16ap"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("schema_version = 1"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.toml");
    fs::write(&path, &text).unwrap();
    let out = ampdu_sim(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--duration-s",
        "1",
        "--n",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_preset_fails() {
    let out = ampdu_sim(&["preset", "office"]);
    assert!(!out.status.success());
}

#[test]
fn run_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = ampdu_sim(&[
            "run",
            "--preset",
            "single-ap",
            "--policy",
            "method2:down=0.381;up=2.618",
            "--duration-s",
            "4",
            "--seed",
            "3",
            "--timeseries",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["runs.csv", "trace.csv", "timeseries.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let runs = read(a.path(), "runs.csv");
    assert!(runs.starts_with("scenario,seed,policy,n_sta,"));
    assert!(runs.contains("method2"));
}

#[test]
fn batch_rejects_duplicate_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ampdu_sim(&[
        "batch",
        "--preset",
        "single-ap",
        "--seeds",
        "1,1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn batch_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = ampdu_sim(&[
        "batch",
        "--preset",
        "single-ap",
        "--duration-s",
        "2",
        "--seeds",
        "1-3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "runs.csv").lines().count(), 4);
    let summary = read(dir.path(), "summary.csv");
    assert!(summary.contains("tcp_throughput_mbps"));
    assert!(summary.lines().all(|l| l.split(',').count() == 7));
}

#[test]
fn sweep_covers_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = ampdu_sim(&[
        "sweep",
        "--preset",
        "single-ap",
        "--duration-s",
        "1",
        "--seeds",
        "1,2",
        "--axis",
        "policies=always-on,no-aggregation",
        "--axis",
        "steps=1000,5000",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Four configurations times two seeds.
    assert_eq!(read(dir.path(), "runs.csv").lines().count(), 9);
}

#[test]
fn bad_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["run", "--preset", "single-ap", "--policy", "method5", "--out-dir", d],
        vec!["run", "--preset", "single-ap", "--budget-ms", "0", "--out-dir", d],
        vec!["run", "--out-dir", d],
        vec!["plot-data", "--figure", "10", "--out-dir", d],
        vec!["sweep", "--preset", "single-ap", "--axis", "speed=1", "--out-dir", d],
    ] {
        let out = ampdu_sim(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
    }
}

#[test]
fn plot_data_trace_figure() {
    let dir = tempfile::tempdir().unwrap();
    let out = ampdu_sim(&[
        "plot-data",
        "--figure",
        "3",
        "--duration-s",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // 250 ms periods over 3 s on one AP, plus the header.
    assert_eq!(read(dir.path(), "fig3_trace.csv").lines().count(), 13);
}
