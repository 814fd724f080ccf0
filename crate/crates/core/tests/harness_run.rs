use std::fs;

use lsv_lab::ensemble::{DistSpec, EntryDistribution};
use lsv_lab::harness::{
    exit_code, run_config, run_experiment, tail_estimate, with_pool, ExperimentConfig, GridSpec, TAIL_HEADER,
};
use lsv_lab::stats::wilson;

fn config(dir: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(DistSpec::Rademacher, 24, 400, GridSpec::Dyadic { min: 0.05, max: 0.8 }, 17);
    c.output = Some(dir.to_path_buf());
    c.event_trials = Some(20);
    c.workers = Some(2);
    c
}

#[test]
fn run_writes_three_files_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let s = run_config(&config(&a)).unwrap();
    assert_eq!(s.files.len(), 3);
    let mut cb = config(&b);
    cb.workers = Some(1);
    run_config(&cb).unwrap();
    for f in ["tail.csv", "events.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let tail = fs::read_to_string(a.join("tail.csv")).unwrap();
    assert!(tail.starts_with(&(TAIL_HEADER.join(",") + "\n")));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 17);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["config"]["dist"]["kind"], "rademacher");
}

#[test]
fn config_file_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.json");
    fs::write(&path, r#"{"n": 10, "trials": 5, "eps_grid": {"kind":"explicit","values":[0.5]}, "seed": 1}"#).unwrap();
    let r = run_experiment(&path);
    assert_eq!(exit_code(&r), 2);
    assert!(r.unwrap_err().to_string().contains("dist"));

    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let cfg = config(&blocker.join("sub"));
    assert_eq!(exit_code(&run_config(&cfg)), 3);

    assert_eq!(exit_code(&run_experiment(&tmp.path().join("absent.json"))), 2);
}

#[test]
fn gaussian_estimates_cover_across_seeds() {
    let d = EntryDistribution::gaussian();
    let grid = [0.3];
    let trials = 2_000;
    let runs: Vec<_> = with_pool(1, || (0..20u64).map(|s| tail_estimate(&d, 16, &grid, trials, 1000 + s).unwrap()).collect())
        .unwrap();
    let pooled: u64 = runs.iter().map(|r| r.counts[0]).sum();
    let p = pooled as f64 / (20 * trials) as f64;
    // each per-seed interval should cover the pooled rate
    let covered = runs.iter().filter(|r| r.ci[0].0 <= p && p <= r.ci[0].1).count();
    assert!(covered >= 18, "{covered}/20");
    let (lo, hi) = wilson(pooled, 20 * trials);
    assert!(lo <= p && p <= hi);
    for r in &runs {
        assert!(r.estimates[0] <= 0.3 + 3.0 * r.halfwidth(0));
    }
}
