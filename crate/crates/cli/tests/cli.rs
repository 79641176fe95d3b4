use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pmeval(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmeval"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = pmeval(out, args);
    assert!(
        o.status.success(),
        "pmeval {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

/// A small configuration written through `pmeval config` and edited.
fn small_config(dir: &Path) -> PathBuf {
    let text = ok(dir, &["config"]);
    let text = text
        .replace("cycles = 20\n", "cycles = 4\n")
        .replace("markets = 40\n", "markets = 12\n");
    assert!(text.contains("cycles = 4") && text.contains("markets = 12"), "{text}");
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_dir(stdout: &str) -> PathBuf {
    let line = stdout
        .lines()
        .find_map(|l| l.strip_prefix("directory: "))
        .expect(stdout);
    PathBuf::from(line)
}

#[test]
fn config_round_trips_through_the_loader() {
    let tmp = tempfile::tempdir().unwrap();
    let first = ok(tmp.path(), &["config"]);
    let path = tmp.path().join("c.toml");
    std::fs::write(&path, &first).unwrap();
    let second = ok(tmp.path(), &["--config", path.to_str().unwrap(), "config"]);
    assert_eq!(first, second);
    let seeded = ok(tmp.path(), &["--seed", "99", "config"]);
    assert!(seeded.contains("seed = 99"));
}

#[test]
fn run_report_and_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out = ok(tmp.path(), &["--config", cfg, "run", "--run-id", "r1"]);
    assert!(out.contains("completed after 4 cycles"), "{out}");
    let dir = run_dir(&out);

    let text = ok(tmp.path(), &["report", dir.to_str().unwrap()]);
    assert!(text.contains("market-copier") && text.contains("momentum"), "{text}");

    let json = ok(
        tmp.path(),
        &["report", dir.to_str().unwrap(), "--format", "json", "--sort", "pnl"],
    );
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["leaderboard"].as_array().unwrap().len(), 2);

    let rel = tmp.path().join("rel.csv");
    ok(
        tmp.path(),
        &[
            "report",
            dir.to_str().unwrap(),
            "--reliability",
            rel.to_str().unwrap(),
            "--compare",
            "market-copier",
            "momentum",
        ],
    );
    let csv = std::fs::read_to_string(&rel).unwrap();
    assert!(csv.starts_with("subject,bin,"), "{csv}");
    assert!(csv.contains("baseline:"));

    assert!(ok(tmp.path(), &["verify", dir.to_str().unwrap()]).starts_with("OK"));
    let events = dir.join("events.jsonl");
    let mut bytes = std::fs::read(&events).unwrap();
    bytes[10] ^= 0x01;
    std::fs::write(&events, bytes).unwrap();
    let o = pmeval(tmp.path(), &["verify", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn checkpointed_run_resumes_to_the_same_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let full = ok(&a, &["--config", cfg, "run", "--run-id", "same"]);
    let part = ok(&b, &["--config", cfg, "run", "--run-id", "same", "--stop-after", "2"]);
    assert!(part.contains("checkpointed after 2 cycles"), "{part}");
    let dir = run_dir(&part);
    let resumed = ok(&b, &["run", "--resume", dir.to_str().unwrap()]);
    let sha = |s: &str| s.lines().find(|l| l.starts_with("events sha256")).unwrap().to_string();
    assert_eq!(sha(&full), sha(&resumed));
}

#[test]
fn synth_then_replay_and_lock() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out = ok(
        tmp.path(),
        &["--config", cfg, "synth", "--markets", "6", "--steps", "3"],
    );
    assert!(out.contains("6 markets x 3 steps (18 snapshots)"), "{out}");
    let feed = tmp.path().join("feed.jsonl");
    let outcomes = tmp.path().join("outcomes.jsonl");
    let replay = ok(
        tmp.path(),
        &[
            "--config",
            cfg,
            "replay",
            "--feed",
            feed.to_str().unwrap(),
            "--outcomes",
            outcomes.to_str().unwrap(),
        ],
    );
    assert!(replay.contains("completed after 3 cycles"), "{replay}");

    let lock = ok(tmp.path(), &["lock", "--created-at", "2025-11-01T00:00:00Z"]);
    let stored = lock.lines().find_map(|l| l.strip_prefix("stored at ")).unwrap();
    assert!(ok(tmp.path(), &["verify", stored]).starts_with("OK contract"));
    let again = ok(tmp.path(), &["lock", "--created-at", "2025-11-01T00:00:00Z"]);
    assert_eq!(lock.lines().next(), again.lines().next(), "locking is deterministic");

    let o = pmeval(tmp.path(), &["lock", "--budget", "1234"]);
    assert_eq!(o.status.code(), Some(2), "nonstandard budget needs opting in");
}

#[test]
fn sweep_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = ok(
        tmp.path(),
        &[
            "--config",
            cfg.to_str().unwrap(),
            "sweep",
            "--budgets",
            "500,1000",
            "--run-id",
            "sw",
        ],
    );
    assert!(out.contains("largest forecast shift"), "{out}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("sw.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[run]\ncycles = \"many\"\n").unwrap();
    let o = pmeval(tmp.path(), &["--config", path.to_str().unwrap(), "config"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
