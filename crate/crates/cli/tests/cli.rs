use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tgs(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tgs"))
        .args(args)
        .current_dir(dir)
        .env_remove("TGS_DEFAULT_SEED")
        .output()
        .expect("run tgs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &[&str] = &["--scenario", "1", "--p", "12", "--n", "40", "--iters", "2000", "--thin", "250"];

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["sample"];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(&["--seed", "5", "--out", out]);
        ok(&tgs(&args, dir.path()));
    }
    for f in ["pips.csv", "trace.csv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let pips = fs::read_to_string(dir.path().join("a/pips.csv")).unwrap();
    assert_eq!(pips.lines().count(), 13);
    assert!(!pips.contains('\r'));
}

#[test]
fn environment_seed_applies_only_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, seed_flag: Option<&str>, env: Option<&str>| {
        let mut args = vec!["sample"];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(&["--out", out]);
        if let Some(s) = seed_flag {
            args.extend_from_slice(&["--seed", s]);
        }
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_tgs"));
        cmd.args(&args).current_dir(dir.path()).env_remove("TGS_DEFAULT_SEED");
        if let Some(e) = env {
            cmd.env("TGS_DEFAULT_SEED", e);
        }
        ok(&cmd.output().unwrap());
        let config: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(out).join("config.json")).unwrap()).unwrap();
        config["seed"].as_u64().unwrap()
    };
    assert_eq!(run("env", None, Some("77")), 77);
    assert_eq!(run("flag", Some("3"), Some("77")), 3);
    assert_eq!(run("none", None, None), 1);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sample"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--kernel", "tgs", "--out", "first"]);
    ok(&tgs(&args, dir.path()));
    ok(&tgs(
        &["sample", "--config", "first/config.json", "--out", "second"],
        dir.path(),
    ));
    let a = fs::read(dir.path().join("first/pips.csv")).unwrap();
    let b = fs::read(dir.path().join("second/pips.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"scenario": 1, "p": 10, "iterations": 100}"#).unwrap();
    let out = tgs(&["sample", "--config", "c.json", "--out", "o"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field `iterations`"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn csv_round_trip_through_export() {
    let dir = tempfile::tempdir().unwrap();
    ok(&tgs(
        &["export", "--scenario", "2", "--p", "8", "--n", "30", "--posterior", "--h", "0.5", "--out", "data"],
        dir.path(),
    ));
    let out = tgs(
        &[
            "sample", "--x", "data/x.csv", "--y", "data/y.csv", "--kernel", "gs", "--iters", "3000", "--h", "0.5",
            "--out", "run",
        ],
        dir.path(),
    );
    ok(&out);
    let pips = fs::read_to_string(dir.path().join("run/pips.csv")).unwrap();
    let header = pips.lines().next().unwrap();
    assert_eq!(header, "index,frequency,rao_blackwell");
    // Plain GS has no Rao-Blackwell column values.
    assert!(pips.lines().nth(1).unwrap().ends_with(','));
    let exact = fs::read_to_string(dir.path().join("data/posterior_pips.csv")).unwrap();
    assert_eq!(exact.lines().count(), 9);
}

#[test]
fn benchmark_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    ok(&tgs(
        &[
            "benchmark", "--scenario", "1", "--p", "10", "--n", "30", "--iters", "1000", "--replicates", "3", "--jobs",
            "2", "--out", "bench",
        ],
        dir.path(),
    ));
    let csv = fs::read_to_string(dir.path().join("bench/efficiency.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 10);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bench/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["comparisons"].as_array().unwrap().len(), 2);
    assert!(summary["gs_iterations"].as_u64().unwrap() >= 1000);
    assert!(dir.path().join("bench/timing.json").exists());
    assert!(dir.path().join("bench/config.json").exists());
}

#[test]
fn benchmark_needs_two_replicates() {
    let dir = tempfile::tempdir().unwrap();
    let out = tgs(
        &["benchmark", "--scenario", "1", "--p", "10", "--n", "30", "--replicates", "1", "--out", "b"],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn tampered_weights_fail_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = tgs(&["verify", "--tamper", "--out", "v.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let text = fs::read_to_string(dir.path().join("v.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let rev = rows.iter().find(|r| r["name"] == "reversibility").unwrap();
    assert_eq!(rev["passed"], false);
}

#[test]
fn fast_verification_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = tgs(&["verify", "--level", "fast"], dir.path());
    ok(&out);
    let names: Vec<String> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["name"].as_str().unwrap().to_string())
        .collect();
    for want in ["reversibility", "bounds", "relaxation_scaling", "weight_variance_decay", "barker_kernel", "cache_consistency"] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
}
