use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"
name = "tiny"
domain = "daytrip"
runs = 2
seed = 3
output = "out"
particles = 32

[[modes]]
name = "aiad"
kind = "aiad"

[[modes]]
name = "unassisted"
kind = "unassisted"

[[modes]]
name = "assume_none"
kind = "aiad"
bias = "none"

[settings]
budget = 3
max_steps = 6

[settings.planner]
iterations = 150
subsample = 16

[settings.automation]
iterations = 150
subsample = 16

[daytrip]
n_pois = 8
n_topics = 4
bfs_iterations = 20
"#;

fn aiad(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_aiad"));
    cmd.args(args).env("RUST_LOG", "warn");
    match seed {
        Some(s) => cmd.env("AIAD_SEED", s),
        None => cmd.env_remove("AIAD_SEED"),
    };
    cmd.output().unwrap()
}

fn write_spec(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_the_experiment_layout_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let out = aiad(&["run", &spec], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("assume_none"), "{stdout}");

    let dir = tmp.path().join("out");
    let manifest = read_json(&dir.join("manifest.json"));
    assert_eq!(manifest["version"], "1");
    assert_eq!(manifest["spec"]["seed"], 3);
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);

    let mut logs: Vec<_> = fs::read_dir(dir.join("runs")).unwrap().map(|e| e.unwrap().file_name()).collect();
    logs.sort();
    assert_eq!(logs.len(), 6);
    assert_eq!(logs[0], "r000_aiad.jsonl");
    for name in &logs {
        let text = fs::read_to_string(dir.join("runs").join(name)).unwrap();
        let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(header["kind"], "header");
        assert_eq!(header["version"], "1");
    }

    let summary = read_json(&dir.join("summary.json"));
    assert_eq!(summary["modes"].as_array().unwrap().len(), 3);
    // Three modes give three pairwise comparisons on two metrics.
    assert_eq!(summary["comparisons"].as_array().unwrap().len(), 6);
    let csv = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("mode"));

    let replayed = aiad(&["replay", dir.to_str().unwrap()], None);
    assert!(replayed.status.success(), "{}", String::from_utf8_lossy(&replayed.stdout));
    let text = String::from_utf8_lossy(&replayed.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("identical")).count(), 6);

    // A tampered log is detected.
    let victim = dir.join("runs").join("r001_aiad.jsonl");
    let mut text = fs::read_to_string(&victim).unwrap();
    text.push_str("{}\n");
    fs::write(&victim, text).unwrap();
    let replayed = aiad(&["replay", victim.to_str().unwrap()], None);
    assert!(!replayed.status.success());
    assert!(String::from_utf8_lossy(&replayed.stdout).starts_with("DIFFERS"));

    fs::remove_file(dir.join("summary.json")).unwrap();
    let summarized = aiad(&["summarize", dir.to_str().unwrap(), "--json"], None);
    assert!(summarized.status.success());
    let printed: Value = serde_json::from_slice(&summarized.stdout).unwrap();
    assert_eq!(printed["name"], "tiny");
    assert!(dir.join("summary.json").exists());
}

#[test]
fn seed_override_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path());
    let out = aiad(&["run", &spec, "--runs", "1", "--output", tmp.path().join("seeded").to_str().unwrap()], Some("77"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = read_json(&tmp.path().join("seeded").join("manifest.json"));
    assert_eq!(manifest["spec"]["seed"], 77);
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 1);

    let bad = aiad(&["run", &spec], Some("minus one"));
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("AIAD_SEED"));
}

#[test]
fn template_round_trips_through_run_specs() {
    for domain in ["daytrip", "inventory"] {
        let out = aiad(&["template", domain, "--preset", "full"], None);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains(&format!("domain = \"{domain}\"")));
        assert!(text.contains("preset = \"full\""));
    }
}

#[test]
fn bad_specs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "runs = 3\n").unwrap();
    let out = aiad(&["run", path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain"));
}
