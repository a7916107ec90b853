use std::collections::BTreeMap;

use uavxai::detectors::DetectorKind;
use uavxai::harness::{AgentRole, ExperimentConfig, Runner, ScalePreset, Stage, Status, StepOutcome};
use uavxai::{Error, Exec};

/// Compact run small enough to go through every stage in seconds.
fn tiny() -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(ScalePreset::Compact);
    c.seed = 3;
    c.train.episodes = 3;
    c.train.warmup = 16;
    c.train.batch = 8;
    c.train.rolling_window = 2;
    c.train.checkpoint_every = 2;
    c.evaluation.episodes = 3;
    c.sweep.eps = vec![0.0, 4.0];
    c.sweep.iterations = vec![1, 3];
    c.sweep.states = 4;
    c.probe.gaps = vec![1.0, 2.0];
    c.probe.bearings_deg = vec![-10.0, 10.0];
    c.shap.background = 4;
    c.shap.images = 2;
    c.latency.runs = 2;
    let d = &mut c.detectors;
    d.background = 4;
    d.states = 12;
    d.windows_per_class = 12;
    d.eval_steps = 6;
    d.fcn.epochs = 1;
    d.cnn.epochs = 1;
    d.lstm.epochs = 1;
    c
}

fn hashes(outcomes: &[StepOutcome]) -> BTreeMap<String, String> {
    outcomes.iter().map(|o| (o.step.clone(), o.report_hash.clone())).collect()
}

#[test]
fn stages_cache_reproduce_and_name_their_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let mut runner = Runner::new(tiny(), dir.path().to_path_buf(), Exec::default()).unwrap();

    match runner.reproduce(Stage::AttackSweep) {
        Err(Error::MissingPrerequisite { stage, .. }) => assert_eq!(stage, "train --apf on"),
        other => panic!("expected a missing prerequisite, got {other:?}"),
    }
    match runner.detect_train(DetectorKind::Lstm) {
        Err(Error::MissingPrerequisite { stage, .. }) => assert_eq!(stage, "detect build"),
        other => panic!("expected a missing prerequisite, got {other:?}"),
    }

    let mut first = Vec::new();
    for stage in Stage::ALL {
        first.extend(runner.reproduce(stage).unwrap());
    }
    assert!(first.iter().all(|o| o.status == Status::Ran));
    for o in &first {
        for r in &o.reports {
            assert!(r.exists(), "{} missing", r.display());
        }
    }
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("agents/apf-off/train_log.csv").exists());

    // a second pass finds everything current, except the timing stage
    let again = runner.reproduce(Stage::TrainCompare).unwrap();
    assert!(again.iter().all(|o| o.status == Status::UpToDate));
    assert_eq!(hashes(&again), hashes(&first[..again.len()]));

    // forced re-runs of seeded stages reproduce their report hashes
    let mut forced = Runner::new(tiny(), dir.path().to_path_buf(), Exec::default()).unwrap().force(true);
    for stage in [Stage::AttackSweep, Stage::DeflectionProbe, Stage::Campaign, Stage::ShapTrace] {
        let out = forced.reproduce(stage).unwrap();
        let before = hashes(&first);
        for o in out {
            assert_eq!(o.status, Status::Ran);
            assert_eq!(before[&o.step], o.report_hash, "{} changed", o.step);
        }
    }
    let timing = forced.reproduce(Stage::Latency).unwrap();
    assert_eq!(timing[0].status, Status::Ran);
}

#[test]
fn config_changes_invalidate_only_dependent_steps() {
    let dir = tempfile::tempdir().unwrap();
    let mut runner = Runner::new(tiny(), dir.path().to_path_buf(), Exec::default()).unwrap();
    runner.train(AgentRole::ApfOn).unwrap();
    let sweep = runner.attack_sweep().unwrap();
    assert_eq!(sweep.status, Status::Ran);

    let mut cfg = tiny();
    cfg.sweep.states = 5;
    let mut runner = Runner::new(cfg, dir.path().to_path_buf(), Exec::default()).unwrap();
    assert_eq!(runner.train(AgentRole::ApfOn).unwrap().status, Status::UpToDate);
    assert_eq!(runner.attack_sweep().unwrap().status, Status::Ran);
}

#[test]
fn tampered_artifacts_are_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    let mut runner = Runner::new(tiny(), dir.path().to_path_buf(), Exec::default()).unwrap();
    runner.train(AgentRole::ApfOff).unwrap();
    std::fs::write(dir.path().join("agents/apf-off/train_report.json"), "{}").unwrap();
    assert_eq!(runner.train(AgentRole::ApfOff).unwrap().status, Status::Ran);
}
