use std::fs;
use std::process::{Command, Output};

fn lsv(args: &[&str], workers: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lsv-lab"));
    c.args(args);
    match workers {
        Some(w) => c.env("LSV_LAB_WORKERS", w),
        None => c.env_remove("LSV_LAB_WORKERS"),
    };
    c.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn tail_writes_artifacts_and_is_worker_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    let a = tmp.path().join("a");
    fs::write(
        &cfg,
        format!(
            r#"{{"dist":{{"kind":"gaussian"}},"n":20,"trials":300,"eps_grid":{{"kind":"explicit","values":[0.1,0.4]}},"seed":4,"output":"{}","event_trials":10}}"#,
            a.display()
        ),
    )
    .unwrap();
    let o = lsv(&["tail", "--config", cfg.to_str().unwrap()], Some("1"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let b = tmp.path().join("b");
    let o = lsv(&["tail", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()], Some("4"));
    assert_eq!(o.status.code(), Some(0));
    for f in ["tail.csv", "events.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    assert!(a.join("manifest.json").exists());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["workers"], 4);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"n":20,"trials":10,"eps_grid":{"kind":"explicit","values":[0.1]},"seed":1}"#).unwrap();
    let o = lsv(&["tail", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dist"));

    let o = lsv(&["tail", "--n", "20", "--trials", "10", "--eps", "1e-9"], None);
    assert_eq!(o.status.code(), Some(2));

    let blocker = tmp.path().join("f");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("d");
    let o = lsv(&["tail", "--n", "20", "--trials", "10", "--eps", "0.1", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));

    let o = lsv(&["bump", "--grid-max", "4", "--step", "1"], Some("zero"));
    assert_eq!(o.status.code(), Some(0), "bump does not sample");
    let o = lsv(&["events", "--n", "20", "--trials", "2"], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_and_flags_merge() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.json");
    fs::write(&cfg, r#"{"dist":{"kind":"rademacher"},"n":12,"trials":5,"seed":3}"#).unwrap();
    let a = stdout(&lsv(&["secular-check", "--config", cfg.to_str().unwrap()], None));
    assert_eq!(a.lines().count(), 6);
    let b = stdout(&lsv(&["secular-check", "--config", cfg.to_str().unwrap(), "--trials", "2"], None));
    assert_eq!(b.lines().count(), 3);
    assert!(a.starts_with(&b));
    fs::write(&cfg, r#"{"n":12,"trials":5,"sed":3}"#).unwrap();
    let o = lsv(&["secular-check", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_subcommand_runs() {
    let runs: [&[&str]; 10] = [
        &["compare", "--dist", "rademacher", "--n", "16", "--trials", "200", "--eps", "0.5,1"],
        &["chi-check", "--n", "16", "--trials", "3", "--ell", "2"],
        &["events", "--n", "16", "--trials", "3"],
        &["smallball", "--n", "16", "--trials", "500", "--eps", "0.1,0.2"],
        &["decouple", "--n", "16", "--trials", "500", "--eps", "0.5"],
        &["negdep", "--n", "20", "--trials", "500", "--k", "1,2"],
        &["sigtails", "--n", "16", "--trials", "100", "--k", "1,2"],
        &["lindeberg", "--n", "16", "--trials", "500", "--dist", "rademacher"],
        &["lcd", "--vector", "golden", "--gamma", "0.1", "--alpha", "1e-6", "--cap", "50"],
        &["bump", "--grid-max", "10", "--step", "1"],
    ];
    for args in runs {
        let out = stdout(&lsv(args, Some("2")));
        assert!(out.lines().count() >= 2, "{args:?}");
    }
    let lcd = stdout(&lsv(&["lcd", "--vector", "golden", "--gamma", "0.1", "--alpha", "1e-6", "--cap", "50"], None));
    assert!(lcd.contains("exceeds_cap"));
}

#[test]
fn lcd_reads_vector_files() {
    let tmp = tempfile::tempdir().unwrap();
    let v = tmp.path().join("v.txt");
    fs::write(&v, "# all ones\n1\n1\n1\n1\n").unwrap();
    let out = stdout(&lsv(&["lcd", "--vector", v.to_str().unwrap(), "--alpha", "1e-20", "--cap", "10"], None));
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "found");
    assert!((row[5].parse::<f64>().unwrap() - 2.0).abs() < 1e-8);
}
