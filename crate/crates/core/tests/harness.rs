use std::fs;

use aiad_core::harness::runner::write_summary;
use aiad_core::harness::spec::SEED_ENV;
use aiad_core::harness::{self, DomainKind, ExperimentSpec, Preset};

const TINY: &str = r#"
domain = "inventory"
name = "tiny"
runs = 2
seed = 5
particles = 64

[[modes]]
name = "aiad"
kind = "aiad"

[[modes]]
name = "unassisted"
kind = "unassisted"

[settings.planner]
iterations = 200
subsample = 16

[inventory]
horizon = 4
"#;

#[test]
fn user_fields_override_the_preset_and_the_rest_is_kept() {
    let spec = ExperimentSpec::from_toml(TINY).unwrap();
    let base = ExperimentSpec::preset(DomainKind::Inventory, Preset::Desk);
    assert_eq!((spec.runs, spec.seed, spec.particles), (2, 5, 64));
    assert_eq!(spec.modes.len(), 2);
    assert_eq!(spec.settings.planner.iterations, 200);
    assert_eq!(spec.settings.planner.subsample, Some(16));
    assert_eq!(spec.settings.planner.exploration, base.settings.planner.exploration);
    assert_eq!(spec.settings.automation, base.settings.automation);
    assert_eq!(spec.inventory.horizon, 4);
    assert_eq!((spec.settings.budget, spec.settings.max_steps), (4, 4));
    assert_eq!(spec.inventory.capacity, base.inventory.capacity);

    let again = ExperimentSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
    assert_eq!(again, spec);

    assert!(ExperimentSpec::from_toml("runs = 2").is_err());
    assert!(ExperimentSpec::from_toml("domain = \"inventory\"\nruns = 0").is_err());
    assert!(ExperimentSpec::from_toml("domain = \"inventory\"\nbogus = 1").is_err());
}

#[test]
fn seed_override_applies_on_load() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    // The only test in this binary that touches the variable.
    std::env::set_var(SEED_ENV, "41");
    let loaded = ExperimentSpec::load(&path);
    std::env::set_var(SEED_ENV, "x");
    let bad = ExperimentSpec::load(&path);
    std::env::remove_var(SEED_ENV);
    let loaded = loaded.unwrap();
    assert_eq!(loaded.seed, 41);
    assert!(loaded.output.starts_with(tmp.path()));
    assert!(bad.is_err());
}

#[test]
fn experiments_persist_summarize_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::from_toml(TINY).unwrap();
    spec.output = tmp.path().join("out");
    let results = harness::run_experiment(&spec).unwrap();
    let summary = harness::summarize(&results);
    write_summary(&spec.output, &summary).unwrap();

    assert_eq!(results.manifest.runs.len(), 2);
    assert_ne!(results.manifest.runs[0].seed, results.manifest.runs[1].seed);
    for mode in ["aiad", "unassisted"] {
        let curves = results.curve(mode).unwrap();
        assert_eq!(curves.len(), 2);
        // One point before acting plus one per period.
        assert!(curves.iter().all(|c| c.len() == 5));
    }
    assert_eq!(summary.runs, 2);
    assert_eq!(summary.modes.len(), 2);
    assert_eq!(summary.comparisons.len(), 1);
    let unassisted = &summary.modes[1];
    assert!(unassisted.curve.iter().all(|c| c.acceptance_rate.is_none()));

    let loaded = harness::load_results(&spec.output).unwrap();
    assert_eq!(loaded.manifest, results.manifest);
    assert_eq!(harness::summarize(&loaded), summary);
    assert_eq!(harness::summarize_dir(&spec.output).unwrap(), summary);
    assert!(spec.output.join("summary.csv").exists());

    for entry in fs::read_dir(spec.output.join("runs")).unwrap() {
        let report = harness::replay(&entry.unwrap().path()).unwrap();
        assert!(report.identical, "{report:?}");
        assert_eq!(report.first_difference, None);
    }

    // A second execution writes identical logs.
    let first = fs::read(spec.output.join("runs/r001_aiad.jsonl")).unwrap();
    harness::run_experiment(&spec).unwrap();
    assert_eq!(fs::read(spec.output.join("runs/r001_aiad.jsonl")).unwrap(), first);
}
