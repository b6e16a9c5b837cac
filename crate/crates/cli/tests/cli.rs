use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn lab(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_harnack-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .expect("spawn harnack-lab")
        .code()
        .unwrap_or(-1)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("read json")).expect("parse json")
}

#[test]
fn passing_run_writes_manifest_with_hashed_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["pucci-selftest", "--set", "pucci.matrices=50"], tmp.path()), 0);
    let m = json(&tmp.path().join("manifest.json"));
    assert_eq!(m["command"], "pucci-selftest");
    assert_eq!(m["pass"], true);
    assert_eq!(m["config"]["pucci"]["matrices"], 50);
    let art = &m["artifacts"][0];
    assert_eq!(art["file"], "pucci_selftest.csv");
    let bytes = std::fs::read(tmp.path().join("pucci_selftest.csv")).unwrap();
    assert_eq!(art["bytes"].as_u64(), Some(bytes.len() as u64));
    assert_eq!(art["sha256"].as_str().unwrap().len(), 64);
    assert!(!bytes.contains(&b'\r'));
    assert!(!tmp.path().join("error.json").exists());
}

#[test]
fn failed_check_exits_one_with_record() {
    let tmp = tempfile::tempdir().unwrap();
    let code = lab(&["validate-phi", "--set", "model.family=power-log", "--set", "model.params=[1,0.5,0]"], tmp.path());
    assert_eq!(code, 1);
    let e = json(&tmp.path().join("error.json"));
    assert_eq!(e["kind"], "check-failed");
    assert!(e["failed"].as_array().unwrap().iter().any(|f| f == "P2-growth"));
    assert_eq!(json(&tmp.path().join("manifest.json"))["pass"], false);
}

#[test]
fn bad_config_exits_two_with_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["evolve", "--set", "evolve.nx=2"], tmp.path()), 2);
    let e = json(&tmp.path().join("error.json"));
    assert_eq!(e["command"], "evolve");
    assert!(e["message"].as_str().unwrap().contains("nx"));

    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["regions", "--set", "no_such_block.x=1"], tmp.path()), 2);
    assert_eq!(json(&tmp.path().join("error.json"))["kind"], "config");
}

#[test]
fn config_file_and_seed_flag_are_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{ "seed": 5, "cover": { "instances": 10 } }"#).unwrap();
    let out = tmp.path().join("a");
    assert_eq!(lab(&["regions", "--config", cfg.to_str().unwrap()], &out), 0);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["cover"]["instances"], 10);

    let out = tmp.path().join("b");
    assert_eq!(lab(&["regions", "--config", cfg.to_str().unwrap(), "--seed", "9"], &out), 0);
    assert_eq!(json(&out.join("manifest.json"))["seed"], 9);
}

#[test]
fn same_seed_gives_identical_bytes_and_other_seeds_differ() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        assert_eq!(lab(&["stack-demo", "--seed", seed, "--set", "stacks.count=40"], &out), 0);
        (std::fs::read(out.join("stack_example.csv")).unwrap(), std::fs::read(out.join("manifest.json")).unwrap())
    };
    let (a, ma) = run("a", "3");
    let (b, mb) = run("b", "3");
    let (c, _) = run("c", "4");
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    assert_ne!(a, c);
}

#[test]
fn unknown_subcommand_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ne!(lab(&["no-such-command"], tmp.path()), 0);
}
