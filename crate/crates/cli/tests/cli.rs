use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fpg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpg"))
        .args(args)
        .env_remove("FPG_LLM_API_KEY")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fpg(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// First stdout line is the output directory.
fn out_dir(stdout: &str) -> PathBuf {
    PathBuf::from(stdout.lines().next().expect("output directory line"))
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_writes_log_tables_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let stdout = ok(&["run", "--steps", "100", "--seed", "3", "--out", root, "--set", "world.episode_length=40"]);
    let dir = out_dir(&stdout);
    let log = std::fs::read_to_string(dir.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 100);
    for f in ["config.toml", "curves.csv", "episodes.csv", "stages.csv", "rewards.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let m = manifest(&dir);
    assert_eq!(m["command"], "run");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["steps"], 100);
    assert!(stdout.contains("mean ally reward"));
}

#[test]
fn identical_runs_write_identical_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let args = ["run", "--steps", "400", "--planner", "heuristic", "--out", root, "--set", "world.episode_length=100"];
    let a = out_dir(&ok(&args));
    let b = out_dir(&ok(&args));
    assert_ne!(a, b);
    assert_eq!(std::fs::read(a.join("log.jsonl")).unwrap(), std::fs::read(b.join("log.jsonl")).unwrap());
    assert_eq!(manifest(&a)["planner"]["calls"], 4);
}

#[test]
fn llm_mode_without_credentials_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fpg(&["run", "--steps", "10", "--planner", "llm", "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("FPG_LLM_API_KEY") && err.contains("--mock-llm"), "{err}");
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn mock_model_drives_the_opponent() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let mock = fixture("mock_valid.json");
    let common = ["--steps", "60", "--planner", "llm", "--out", root, "--set", "world.episode_length=30"];
    let dir = out_dir(&ok(&[&["run", "--mock-llm", &mock][..], &common].concat()));
    let m = manifest(&dir);
    assert_eq!(m["planner"]["calls"], 2);
    assert_eq!(m["planner"]["fallbacks"], 0);
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(dir.join("log.jsonl")).unwrap().lines().nth(1).unwrap()).unwrap();
    assert!(first["p_opp"][0].as_f64().unwrap() > 0.0);

    let faulty = fixture("mock_faulty.json");
    let dir = out_dir(&ok(&[&["run", "--mock-llm", &faulty][..], &common].concat()));
    let m = manifest(&dir);
    assert_eq!(m["planner"]["fallbacks"], 2);
    assert_eq!(m["planner"]["attempts"], 6);
}

#[test]
fn bad_override_names_the_field() {
    let out = fpg(&["run", "--steps", "5", "--set", "radio.nonsense=1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nonsense"), "{err}");

    let out = fpg(&["run", "--steps", "5", "--set", "world.limits.max_speed=0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("world.limits.max_speed"));
}

#[test]
fn replay_reproduces_the_metric_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let dir = out_dir(&ok(&["run", "--steps", "300", "--out", root, "--set", "costs.M=12"]));
    let out = tmp.path().join("replayed");
    ok(&["replay", dir.join("log.jsonl").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    for f in ["episodes.csv", "stages.csv", "rewards.csv"] {
        assert_eq!(std::fs::read(dir.join(f)).unwrap(), std::fs::read(out.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ablation_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let stdout = ok(&["ablate", "--steps", "50", "--seeds", "2", "--out", root]);
    let dir = out_dir(&stdout);
    let mut reader = csv::Reader::from_path(dir.join("ablation.csv")).unwrap();
    let cells: Vec<String> = reader.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(cells.len(), 7);
    assert_eq!(cells[0], "baseline");
    assert!(cells.contains(&"single_jam_broadband_blocking".to_string()));
    assert!(cells.contains(&"no_kb".to_string()) && cells.contains(&"no_llm".to_string()));
    assert!(dir.join("no_kb").join("seed-43").join("log.jsonl").exists());
}

#[test]
fn trained_checkpoint_feeds_run() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    let set = ["--set", "world.episode_length=100", "--set", "agents.maddpg.warmup=50"];
    let dir = out_dir(&ok(&[&["train", "--steps", "200", "--out", root][..], &set].concat()));
    let ckpt = dir.join("checkpoint.bin");
    assert!(ckpt.exists());
    let run = [&["run", "--steps", "50", "--out", root, "--set", "agents.ally=maddpg", "--checkpoint"][..], &[ckpt.to_str().unwrap()], &set].concat();
    let a = out_dir(&ok(&run));
    let b = out_dir(&ok(&run));
    assert_eq!(std::fs::read(a.join("log.jsonl")).unwrap(), std::fs::read(b.join("log.jsonl")).unwrap());
}
