//! End-to-end pipeline behavior: persistence, offline replay, determinism.

use std::path::Path;

use sentinet::chidetect::threshold_from_far;
use sentinet::harness::{
    cmd_detect_offline, paper_fig2_config, prepare_instance, run_algorithm1, ScenarioConfig,
};

fn small_config(dir: &Path) -> ScenarioConfig {
    let mut cfg = paper_fig2_config();
    cfg.run.steps = 80;
    cfg.run.replications = 2;
    cfg.run.out_dir = Some(dir.to_path_buf());
    cfg
}

#[test]
fn config_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("scenario.json");
    let cfg = paper_fig2_config();
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    let back = ScenarioConfig::from_file(&path).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(&tmp.path().join("run"));
    let first = run_algorithm1(&cfg).unwrap();
    let mut snapshots = Vec::new();
    for dir in &first.replication_dirs {
        for name in ["truth.csv", "estimates.csv", "mse.csv", "residuals.csv", "verdicts.csv"] {
            snapshots.push((dir.join(name), std::fs::read(dir.join(name)).unwrap()));
        }
    }
    snapshots.push((
        first.metadata_path.clone(),
        std::fs::read(&first.metadata_path).unwrap(),
    ));
    let second = run_algorithm1(&cfg).unwrap();
    assert_eq!(second.any_h1, first.any_h1);
    for (path, bytes) in &snapshots {
        assert_eq!(
            &std::fs::read(path).unwrap(),
            bytes,
            "{} changed between reruns",
            path.display()
        );
    }
}

#[test]
fn offline_replay_reproduces_verdicts_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(&tmp.path().join("run"));
    let artifacts = run_algorithm1(&cfg).unwrap();
    let inst = prepare_instance(&cfg).unwrap();
    for dir in &artifacts.replication_dirs {
        let replay = dir.join("verdicts_replay.csv");
        cmd_detect_offline(
            &dir.join("residuals.csv"),
            &inst.bound.lambda,
            cfg.detector.t,
            &cfg.detector.fars,
            &replay,
        )
        .unwrap();
        assert_eq!(
            std::fs::read(&replay).unwrap(),
            std::fs::read(dir.join("verdicts.csv")).unwrap(),
            "replayed verdicts differ in {}",
            dir.display()
        );
    }
}

#[test]
fn all_zero_residuals_give_all_h0() {
    let tmp = tempfile::tempdir().unwrap();
    let residuals = tmp.path().join("residuals.csv");
    let mut text = String::from("step,sensor,value\n");
    for k in 1..=40 {
        for s in 0..2 {
            text.push_str(&format!("{k},{s},0\n"));
        }
    }
    std::fs::write(&residuals, text).unwrap();
    let out = tmp.path().join("verdicts.csv");
    let any_h1 = cmd_detect_offline(&residuals, &[1.0], 12, &[0.05, 0.35], &out).unwrap();
    assert!(!any_h1);
    let verdicts = std::fs::read_to_string(&out).unwrap();
    for line in verdicts.lines().skip(1) {
        assert!(line.ends_with(",0,0"), "unexpected H1 in {line}");
    }
}

#[test]
fn constructed_window_crossing_theta_one_fires_once() {
    // twelve z-values of 22/12 each sum to 22 > θ(0.05, 12) ≈ 21.03 exactly
    // at the step where the window last covers them all
    let theta = threshold_from_far(0.05, 12);
    assert!(theta < 22.0);
    let lambda: f64 = 0.7;
    let spike = (22.0 / 12.0 * lambda).sqrt();
    let tmp = tempfile::tempdir().unwrap();
    let residuals = tmp.path().join("residuals.csv");
    let mut text = String::from("step,sensor,value\n");
    for k in 1..=36 {
        let r = if (13..=24).contains(&k) { spike } else { 0.0 };
        text.push_str(&format!("{k},0,{r}\n"));
    }
    std::fs::write(&residuals, text).unwrap();
    let out = tmp.path().join("verdicts.csv");
    let any_h1 = cmd_detect_offline(&residuals, &[lambda], 12, &[0.05], &out).unwrap();
    assert!(any_h1);
    let verdicts = std::fs::read_to_string(&out).unwrap();
    let h1_steps: Vec<&str> = verdicts
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",1"))
        .collect();
    assert_eq!(h1_steps.len(), 1, "verdicts: {verdicts}");
    assert!(h1_steps[0].starts_with("24,0,"), "fired at {}", h1_steps[0]);
}

#[test]
fn gain_file_reuse_matches_synthesis() {
    // a simulate run persists its gain; loading it back produces the same
    // instance as synthesizing from scratch
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(&tmp.path().join("run"));
    let artifacts = run_algorithm1(&cfg).unwrap();
    let mut reuse = cfg.clone();
    reuse.gain.gain_file = Some(artifacts.gain_path.clone());
    reuse.run.out_dir = Some(tmp.path().join("run2"));
    let second = run_algorithm1(&reuse).unwrap();
    for (a, b) in artifacts
        .replication_dirs
        .iter()
        .zip(&second.replication_dirs)
    {
        assert_eq!(
            std::fs::read(a.join("verdicts.csv")).unwrap(),
            std::fs::read(b.join("verdicts.csv")).unwrap()
        );
    }
}

#[test]
fn attack_free_run_exits_clean_at_strict_far() {
    // the same scenario with no attacks and only the strict threshold stays
    // below any H1 over a short horizon
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&tmp.path().join("run"));
    cfg.attacks.clear();
    cfg.detector.fars = vec![0.001];
    cfg.run.replications = 1;
    let artifacts = run_algorithm1(&cfg).unwrap();
    assert!(!artifacts.any_h1);
}
