use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lsv_lab::events::ProfileParams;
use lsv_lab::harness::commands::{self, Sampling};
use lsv_lab::harness::{
    exit_code, resolve_workers, run_config, universality_compare, with_pool, ExperimentConfig, GridSpec, Table,
};
use lsv_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "lsv-lab", version, about = "Monte Carlo lab for the least singular value of random matrices")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tail of sigma_n: writes tail.csv, events.csv and manifest.json
    Tail(TailArgs),
    /// Tail of a law against the Gaussian tail
    Compare(TailArgs),
    /// Secular roots against the stacked SVD
    SecularCheck(CommonArgs),
    /// Truncated vs full correction factor
    ChiCheck(ChiArgs),
    /// Per-trial regularity indicators
    Events(EventsArgs),
    Smallball(SmallballArgs),
    Decouple(DecoupleArgs),
    Negdep(NegdepArgs),
    Sigtails(SigtailsArgs),
    Lindeberg(LindebergArgs),
    Lcd(LcdArgs),
    Bump(BumpArgs),
}

/// Flags shared by the sampling subcommands. Every flag may also be given as a
/// key of the JSON object in `--config`; flags win.
#[derive(Args, Serialize, Deserialize, Default)]
struct CommonArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// gaussian | rademacher | uniform | discrete:<support>:<probs> | JSON
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct TailArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Explicit eps values, comma separated
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Dyadic grid eps_min * 2^j up to eps_max
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    eps_max: Option<f64>,
    /// Output directory for `tail`, CSV path for `compare`
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    event_trials: Option<u64>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct ChiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
    /// Truncation length or `auto`
    #[arg(long)]
    ell: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct EventsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
    #[arg(long)]
    lcd_alpha: Option<f64>,
    #[arg(long)]
    lcd_gamma: Option<f64>,
    #[arg(long)]
    lcd_cap: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct SmallballArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct DecoupleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct NegdepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    c_small: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct SigtailsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long)]
    c_low: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct LindebergArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
    /// Number of random unit directions averaged in the test function
    #[arg(long)]
    directions: Option<usize>,
    /// psi is evaluated at <u, x> / scale
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct LcdArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// File with one real per line, or `ones:<n>` / `golden`
    #[arg(long)]
    vector: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
struct BumpArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Overlay the flags that were given on top of the config file's object.
fn merge<T: Serialize + DeserializeOwned + Default>(cli: T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else { return Ok(cli) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::config("<config>", format!("cannot read {}: {e}", path.display())))?;
    let mut base: Value = serde_json::from_str(&text).map_err(|e| LabError::config("<config>", e.to_string()))?;
    let obj = base.as_object_mut().ok_or_else(|| LabError::config("<config>", "top level must be an object"))?;
    // a law may be written as a JSON object in the file
    if let Some(d) = obj.get_mut("dist") {
        if d.is_object() {
            *d = Value::String(d.to_string());
        }
    }
    // every field serializes (as null when unset), so the default lists the accepted keys
    let known = serde_json::to_value(T::default()).expect("serializable");
    if let Some(k) = obj.keys().find(|k| !known.as_object().is_some_and(|m| m.contains_key(*k))) {
        return Err(LabError::config(k.as_str(), "unknown field"));
    }
    if let Value::Object(flags) = serde_json::to_value(&cli).expect("serializable") {
        for (k, v) in flags {
            if !v.is_null() {
                obj.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| LabError::config("<config>", e.to_string()))
}

fn need<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| LabError::config(field, "missing; pass the flag or set it in --config"))
}

fn sampling(c: &CommonArgs) -> Result<Sampling> {
    Ok(Sampling {
        dist: commands::parse_dist(c.dist.as_deref().unwrap_or("gaussian"))?,
        n: need(c.n, "n")?,
        trials: need(c.trials, "trials")?,
        seed: c.seed.unwrap_or(0),
    })
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| LabError::Output(format!("{}: {e}", dir.display())))?;
            }
            table.write(p)
        }
        None => {
            print!("{}", table.to_csv());
            Ok(())
        }
    }
}

/// Run a table command on the configured pool and write its CSV.
fn table_cmd(c: &CommonArgs, f: impl FnOnce(&Sampling) -> Result<Table> + Send) -> Result<()> {
    let s = sampling(c)?;
    let workers = resolve_workers(c.workers)?;
    let table = with_pool(workers, || f(&s))??;
    emit(&table, c.out.as_deref())
}

fn experiment_config(a: TailArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(
            commands::parse_dist(a.dist.as_deref().unwrap_or("gaussian"))?.spec(),
            need(a.n, "n")?,
            need(a.trials, "trials")?,
            GridSpec::Explicit { values: vec![] },
            0,
        ),
    };
    if a.config.is_some() {
        if let Some(d) = &a.dist {
            cfg.dist = commands::parse_dist(d)?.spec();
        }
        cfg.n = a.n.unwrap_or(cfg.n);
        cfg.trials = a.trials.unwrap_or(cfg.trials);
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.workers = a.workers.or(cfg.workers);
    cfg.output = a.out.or(cfg.output);
    cfg.event_trials = a.event_trials.or(cfg.event_trials);
    match (a.eps, a.eps_min, a.eps_max) {
        (Some(values), None, None) => cfg.eps_grid = GridSpec::Explicit { values },
        (None, Some(min), Some(max)) => cfg.eps_grid = GridSpec::Dyadic { min, max },
        (None, None, None) if a.config.is_some() => {}
        (None, None, None) => return Err(LabError::config("eps_grid", "pass --eps or --eps-min/--eps-max")),
        _ => return Err(LabError::config("eps_grid", "use either --eps or both --eps-min and --eps-max")),
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Tail(a) => {
            let cfg = experiment_config(a)?;
            let s = run_config(&cfg)?;
            eprintln!(
                "wrote {} (singular atoms {}, svd fallbacks {})",
                s.out_dir.display(),
                s.tail.singular_atoms,
                s.tail.svd_fallbacks
            );
            Ok(())
        }
        Cmd::Compare(a) => {
            let out = a.out.clone();
            let mut cfg = experiment_config(a)?;
            cfg.output = None;
            let rep = universality_compare(&cfg)?;
            emit(&rep.to_table(), out.as_deref())?;
            eprintln!(
                "max discrepancy {:.3e}; all intervals overlap: {}; singular atoms {} vs {} (reference)",
                rep.max_discrepancy,
                rep.all_overlap(),
                rep.target.singular_atoms,
                rep.reference.singular_atoms
            );
            Ok(())
        }
        Cmd::SecularCheck(a) => {
            let p = a.config.clone();
            let a = merge(a, p.as_deref())?;
            table_cmd(&a, commands::secular_check)
        }
        Cmd::ChiCheck(a) => {
            let p = a.common.config.clone();
            let a = merge(a, p.as_deref())?;
            let ell = match a.ell.as_deref() {
                None | Some("auto") => None,
                Some(s) => Some(s.parse().map_err(|_| LabError::config("ell", format!("`{s}` is not an integer or auto")))?),
            };
            table_cmd(&a.common, |s| commands::chi_check(s, ell))
        }
        Cmd::Events(a) => {
            let p = a.common.config.clone();
            let a = merge(a, p.as_deref())?;
            let d = ProfileParams::default();
            let params = ProfileParams {
                lcd_alpha: a.lcd_alpha.unwrap_or(d.lcd_alpha),
                lcd_gamma: a.lcd_gamma.unwrap_or(d.lcd_gamma),
                lcd_cap: a.lcd_cap.unwrap_or(d.lcd_cap),
                ..d
            };
            table_cmd(&a.common, |s| commands::events(s, &params))
        }
        Cmd::Smallball(a) => {
            let p = a.common.config.clone();
            let a = merge(a, p.as_deref())?;
            let eps = a.eps.unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.4]);
            table_cmd(&a.common, |s| commands::smallball(s, &eps))
        }
        Cmd::Decouple(a) => {
            let p = a.common.config.clone();
            let a = merge(a, p.as_deref())?;
            let t = a.t.unwrap_or_else(|| vec![0.0, 1.0, 2.0, 3.0]);
            table_cmd(&a.common, |s| commands::decouple(s, a.eps.unwrap_or(0.2), &t))
        }
        Cmd::Negdep(a) => {
            let p = a.common.config.clone();
            let a = merge(a, p.as_deref())?;
            let k = a.k.unwrap_or_else(|| vec![4, 9, 16]);
            table_cmd(&a.common, |s| commands::negdep(s, a.eps.unwrap_or(0.1), a.c_small.unwrap_or(0.5), &k))
        }
        Cmd::Sigtails(a) => {
            let p = a.common.config.clone();
            let a = merge(a, p.as_deref())?;
            let k = a.k.unwrap_or_else(|| vec![1, 2, 3, 4]);
            let t = a.t.unwrap_or_else(|| vec![1.0, 2.0, 3.0]);
            table_cmd(&a.common, |s| commands::sigtails(s, &k, &t, a.c_low.unwrap_or(0.5)))
        }
        Cmd::Lindeberg(a) => {
            let p = a.common.config.clone();
            let a = merge(a, p.as_deref())?;
            table_cmd(&a.common, |s| commands::lindeberg(s, a.directions.unwrap_or(1), a.scale.unwrap_or(4.0)))
        }
        Cmd::Lcd(a) => {
            let p = a.config.clone();
            let a = merge(a, p.as_deref())?;
            let v = commands::builtin_or_file(&need(a.vector, "vector")?)?;
            let t = commands::lcd_table(
                v,
                a.alpha.unwrap_or(lsv_lab::structure::DEFAULT_ALPHA),
                a.gamma.unwrap_or(lsv_lab::structure::DEFAULT_GAMMA),
                a.cap.unwrap_or(1e3),
            )?;
            emit(&t, a.out.as_deref())
        }
        Cmd::Bump(a) => {
            let p = a.config.clone();
            let a = merge(a, p.as_deref())?;
            let t = commands::bump_table(a.grid_max.unwrap_or(64.0), a.step.unwrap_or(0.5))?;
            emit(&t, a.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = run(cli.cmd);
    if let Err(e) = &r {
        eprintln!("lsv-lab: {e}");
    }
    ExitCode::from(exit_code(&r) as u8)
}
