use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use setrisk::config::RunConfig;

const SMALL: &str = r#"{
  "version": 1,
  "tree": {
    "d": 2, "steps": 3, "horizon": 1.0, "branches": 2, "nu": 1.0,
    "mu": [0.1], "sigma": [0.3], "s0": [1.0], "rate": 0.05,
    "gamma": [0.02], "compounding": "continuous"
  },
  "payoff": {"type": "put", "strike": 1.0},
  "market": {"type": "cone"},
  "runs": [
    {"name": "shp", "risk": {"kind": "worst_case"}},
    {"name": "avar", "risk": {"kind": "avar", "lambda": [0.5, 0.5]}}
  ]
}"#;

fn setrisk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setrisk"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn writes_frontiers_and_verified_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = setrisk(
        dir.path(),
        &["--config", &cfg, "--sample-path", "7", "--emit-frontier", "0", "--emit-frontier", "1:1", "--dump-tree"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches(" 0 violations").count(), 2, "{stdout}");
    for f in ["shp_frontier_t0.csv", "shp_frontier_t1_1.csv", "avar_trace.csv", "tree.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let trace = fs::read_to_string(dir.path().join("shp_trace.csv")).unwrap();
    assert!(trace.starts_with("# seed 7\n"));
    assert_eq!(trace.lines().count(), 6);
}

#[test]
fn reruns_and_thread_counts_agree_bytewise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let mut dumps = Vec::new();
    for jobs in ["1", "1", "4"] {
        let out = setrisk(dir.path(), &["--config", &cfg, "--jobs", jobs, "--dump-all", "dump.json"]);
        assert!(out.status.success());
        dumps.push(fs::read(dir.path().join("dump.json")).unwrap());
    }
    assert_eq!(dumps[0], dumps[1]);
    assert_eq!(dumps[0], dumps[2]);
    let v: serde_json::Value = serde_json::from_slice(&dumps[0]).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn run_selection_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = setrisk(dir.path(), &["--config", &cfg, "--run", "avar", "--path", "0,1,1"]);
    assert!(out.status.success());
    assert!(dir.path().join("avar_trace.csv").exists());
    assert!(!dir.path().join("shp_frontier_t0.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = setrisk(dir.path(), &["--config", "nope.json"]);
    assert_eq!(missing.status.code(), Some(1));

    let bad = write_config(dir.path(), "bad.json", &SMALL.replace("\"version\": 1", "\"version\": 2"));
    assert_eq!(setrisk(dir.path(), &["--config", &bad]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "small.json", SMALL);
    let short_path = setrisk(dir.path(), &["--config", &cfg, "--path", "0,1"]);
    assert_eq!(short_path.status.code(), Some(2));

    let unknown_run = setrisk(dir.path(), &["--config", &cfg, "--run", "nope"]);
    assert_eq!(unknown_run.status.code(), Some(2));

    let blocked = SMALL.replace(
        "{\"type\": \"cone\"}",
        "{\"type\": \"cone\", \"trading\": {\"rows\": [[[1.0, 0.0], 1.0], [[-1.0, 0.0], 1.0]]}}",
    );
    let blocked = write_config(dir.path(), "blocked.json", &blocked);
    let out = setrisk(dir.path(), &["--config", &blocked]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario path"));
}

#[test]
fn shipped_configs_round_trip() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["ex71.json", "ex72.json", "ex73.json"] {
        let text = fs::read_to_string(root.join(name)).unwrap();
        let cfg = RunConfig::parse(&text).unwrap();
        cfg.validate().unwrap();
        let again = RunConfig::parse(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}
