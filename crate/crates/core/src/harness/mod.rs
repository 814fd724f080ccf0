//! Monte Carlo experiments on the least singular value and the file plumbing
//! around them.
//!
//! Every trial draws its matrix from `substream(seed, trial, MATRIX)` and
//! results are folded in trial order, so outputs do not depend on the number
//! of workers.

pub mod commands;
pub mod table;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::ensemble::{fill_matrix_trial, DistSpec, EntryDistribution};
use crate::error::{LabError, Result};
use crate::events::{regularity_profile, ProfileParams};
use crate::numeric::dot;
use crate::rng::{hash64, role};
use crate::spectra::fast::{sigma_min_square, Route, Workspace};
use crate::spectra::RANK_TOL;
use crate::stats::wilson;
pub use table::{fmt_f, Table};

/// Smallest positive eps we accept; below this the tail is out of reach.
pub const EPS_FLOOR: f64 = 1e-8;
/// Multiplicative slack applied to both intervals before checking overlap.
pub const COMPARE_SLACK: f64 = 1.15;
pub const WORKERS_ENV: &str = "LSV_LAB_WORKERS";
pub const TAIL_HEADER: [&str; 6] = ["eps", "count", "trials", "estimate", "ci_low", "ci_high"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridSpec {
    Explicit { values: Vec<f64> },
    Dyadic { min: f64, max: f64 },
}

impl GridSpec {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let v = match self {
            GridSpec::Explicit { values } => values.clone(),
            GridSpec::Dyadic { min, max } => dyadic_grid(*min, *max)?,
        };
        check_eps_grid(&v)?;
        Ok(v)
    }
}

fn check_eps_grid(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(LabError::config("eps_grid", "grid is empty"));
    }
    if let Some(e) = v.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(LabError::config("eps_grid", format!("eps = {e} is not a finite non-negative number")));
    }
    if let Some(e) = v.iter().find(|e| **e > 0.0 && **e < EPS_FLOOR) {
        return Err(LabError::config(
            "eps_grid",
            format!("eps = {e:e} is below {EPS_FLOOR:e}; tails that small cannot be estimated by direct sampling"),
        ));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::config("eps_grid", "values must be strictly ascending"));
    }
    Ok(())
}

/// {min 2^j : j >= 0} intersected with (0, max], the upper end inclusive.
pub fn dyadic_grid(min: f64, max: f64) -> Result<Vec<f64>> {
    if !(min > 0.0 && min.is_finite() && max.is_finite()) {
        return Err(LabError::config("eps_grid", format!("dyadic grid needs 0 < min, got min = {min}, max = {max}")));
    }
    let mut out = Vec::new();
    let mut e = min;
    while e <= max * (1.0 + 1e-12) {
        out.push(e);
        e *= 2.0;
    }
    if out.is_empty() {
        return Err(LabError::config("eps_grid", format!("dyadic grid ({min}, {max}) is empty")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dist: DistSpec,
    pub n: usize,
    pub trials: u64,
    pub eps_grid: GridSpec,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Matrices profiled for the event summary; defaults to min(trials, 100).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_trials: Option<u64>,
}

fn field<T: for<'de> Deserialize<'de>>(obj: &Map<String, Value>, name: &str) -> Result<Option<T>> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| LabError::config(name, e.to_string())),
    }
}

fn required<T: for<'de> Deserialize<'de>>(obj: &Map<String, Value>, name: &str) -> Result<T> {
    field(obj, name)?.ok_or_else(|| LabError::config(name, "missing required field"))
}

impl ExperimentConfig {
    pub fn new(dist: DistSpec, n: usize, trials: u64, eps_grid: GridSpec, seed: u64) -> Self {
        ExperimentConfig {
            dist,
            n,
            trials,
            eps_grid,
            seed,
            workers: None,
            output: None,
            event_trials: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| LabError::config("<config>", e.to_string()))?;
        let obj = v.as_object().ok_or_else(|| LabError::config("<config>", "top level must be an object"))?;
        const KNOWN: [&str; 8] = ["dist", "n", "trials", "eps_grid", "seed", "workers", "output", "event_trials"];
        if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(LabError::config(k.as_str(), "unknown field"));
        }
        let cfg = ExperimentConfig {
            dist: required(obj, "dist")?,
            n: required(obj, "n")?,
            trials: required(obj, "trials")?,
            eps_grid: required(obj, "eps_grid")?,
            seed: required(obj, "seed")?,
            workers: field(obj, "workers")?,
            output: field(obj, "output")?,
            event_trials: field(obj, "event_trials")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::config("<config>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution()?;
        if self.n < 2 {
            return Err(LabError::config("n", format!("need n >= 2, got {}", self.n)));
        }
        if self.trials == 0 {
            return Err(LabError::config("trials", "need at least one trial"));
        }
        if self.workers == Some(0) {
            return Err(LabError::config("workers", "need at least one worker"));
        }
        self.eps_grid.resolve()?;
        Ok(())
    }

    pub fn distribution(&self) -> Result<EntryDistribution> {
        EntryDistribution::from_spec(&self.dist).map_err(|e| LabError::config("dist", e.to_string()))
    }
}

/// Worker count: the environment variable wins over the config, which wins
/// over the machine's parallelism.
pub fn resolve_workers(requested: Option<usize>) -> Result<usize> {
    if let Ok(s) = std::env::var(WORKERS_ENV) {
        return match s.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(LabError::config(WORKERS_ENV, format!("`{s}` is not a positive integer"))),
        };
    }
    match requested {
        Some(0) => Err(LabError::config("workers", "need at least one worker")),
        Some(w) => Ok(w),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Run `f` on a dedicated pool of `workers` threads.
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub dist: EntryDistribution,
    pub n: usize,
    pub eps_grid: Vec<f64>,
    pub counts: Vec<u64>,
    pub trials: u64,
    pub estimates: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub seed: u64,
    /// Trials with sigma_n <= RANK_TOL |A|_F (numerically singular).
    pub singular_atoms: u64,
    /// Trials that left the LU/Lanczos route for a full SVD.
    pub svd_fallbacks: u64,
}

impl TailEstimate {
    pub fn halfwidth(&self, i: usize) -> f64 {
        (self.ci[i].1 - self.ci[i].0) / 2.0
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&TAIL_HEADER);
        for i in 0..self.eps_grid.len() {
            t.push(vec![
                fmt_f(self.eps_grid[i]),
                self.counts[i].to_string(),
                self.trials.to_string(),
                fmt_f(self.estimates[i]),
                fmt_f(self.ci[i].0),
                fmt_f(self.ci[i].1),
            ]);
        }
        t
    }

    pub fn to_csv(&self) -> String {
        self.to_table().to_csv()
    }
}

struct TrialSigma {
    sigma: f64,
    atom: bool,
    fallback: bool,
}

/// sigma_n for each trial, in trial order, on the current rayon pool.
fn sample_sigmas(dist: &EntryDistribution, n: usize, trials: u64, seed: u64) -> Result<Vec<TrialSigma>> {
    (0..trials)
        .into_par_iter()
        .map_init(
            || (Workspace::default(), vec![0.0; n * n]),
            |(ws, buf), t| {
                fill_matrix_trial(dist, seed, t, buf);
                let fro = dot(buf, buf).sqrt();
                let (sigma, route) = sigma_min_square(buf, n, ws)?;
                Ok(TrialSigma {
                    sigma,
                    atom: sigma <= RANK_TOL * fro,
                    fallback: n >= 16 && route == Route::Svd,
                })
            },
        )
        .collect()
}

/// Tail estimate on the current rayon pool; `eps_grid` must already be validated.
pub fn tail_estimate(dist: &EntryDistribution, n: usize, eps_grid: &[f64], trials: u64, seed: u64) -> Result<TailEstimate> {
    if n < 2 || trials == 0 {
        return Err(LabError::InvalidArgument(format!("need n >= 2 and trials >= 1, got n = {n}, trials = {trials}")));
    }
    check_eps_grid(eps_grid)?;
    let sigmas = sample_sigmas(dist, n, trials, seed)?;
    let scale = 1.0 / (n as f64).sqrt();
    let counts: Vec<u64> = eps_grid
        .iter()
        .map(|&e| {
            let thr = e * scale;
            sigmas.iter().filter(|s| s.sigma <= thr).count() as u64
        })
        .collect();
    let estimates = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    Ok(TailEstimate {
        dist: dist.clone(),
        n,
        eps_grid: eps_grid.to_vec(),
        ci: counts.iter().map(|&c| wilson(c, trials)).collect(),
        counts,
        trials,
        estimates,
        seed,
        singular_atoms: sigmas.iter().filter(|s| s.atom).count() as u64,
        svd_fallbacks: sigmas.iter().filter(|s| s.fallback).count() as u64,
    })
}

pub fn tail_probability(cfg: &ExperimentConfig) -> Result<TailEstimate> {
    cfg.validate()?;
    let dist = cfg.distribution()?;
    let grid = cfg.eps_grid.resolve()?;
    let workers = resolve_workers(cfg.workers)?;
    with_pool(workers, || tail_estimate(&dist, cfg.n, &grid, cfg.trials, cfg.seed))?
}

/// Reference upper bound for Gaussian matrices.
pub fn edelman_reference(eps: f64) -> f64 {
    eps.clamp(0.0, 1.0)
}

pub fn spielman_teng_reference(eps: f64, n: usize, c_exp: f64) -> f64 {
    (eps.max(0.0) + (-c_exp * n as f64).exp()).min(1.0)
}

pub fn overlap_with_slack(a: (f64, f64), b: (f64, f64), slack: f64) -> bool {
    a.0 / slack <= b.1 * slack && b.0 / slack <= a.1 * slack
}

/// Seed of the Gaussian reference run, disjoint from the target's streams.
pub fn reference_seed(seed: u64) -> u64 {
    hash64(seed, u64::MAX, role::REFERENCE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub target: TailEstimate,
    pub reference: TailEstimate,
    /// target / reference estimate per eps (NaN when both vanish).
    pub ratios: Vec<f64>,
    pub overlap: Vec<bool>,
    /// Largest |target - reference| over the grid.
    pub max_discrepancy: f64,
}

impl CompareReport {
    pub fn all_overlap(&self) -> bool {
        self.overlap.iter().all(|o| *o)
    }

    /// Numerically singular target trials; a Gaussian reference has none.
    pub fn atom_excess(&self) -> i64 {
        self.target.singular_atoms as i64 - self.reference.singular_atoms as i64
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "eps",
            "count",
            "ref_count",
            "trials",
            "estimate",
            "ref_estimate",
            "ratio",
            "ci_low",
            "ci_high",
            "ref_ci_low",
            "ref_ci_high",
            "overlap",
        ]);
        let (a, b) = (&self.target, &self.reference);
        for i in 0..a.eps_grid.len() {
            t.push(vec![
                fmt_f(a.eps_grid[i]),
                a.counts[i].to_string(),
                b.counts[i].to_string(),
                a.trials.to_string(),
                fmt_f(a.estimates[i]),
                fmt_f(b.estimates[i]),
                fmt_f(self.ratios[i]),
                fmt_f(a.ci[i].0),
                fmt_f(a.ci[i].1),
                fmt_f(b.ci[i].0),
                fmt_f(b.ci[i].1),
                self.overlap[i].to_string(),
            ]);
        }
        t
    }
}

/// Tail of `dist` against the Gaussian tail on independent streams.
pub fn compare_estimates(target: TailEstimate, reference: TailEstimate) -> Result<CompareReport> {
    if target.n != reference.n || target.trials != reference.trials || target.eps_grid != reference.eps_grid {
        return Err(LabError::InvalidArgument("compared runs must share n, trials and eps grid".into()));
    }
    let ratios = target
        .estimates
        .iter()
        .zip(&reference.estimates)
        .map(|(a, b)| if *a == 0.0 && *b == 0.0 { f64::NAN } else { a / b })
        .collect();
    let overlap = target.ci.iter().zip(&reference.ci).map(|(a, b)| overlap_with_slack(*a, *b, COMPARE_SLACK)).collect();
    let max_discrepancy = target
        .estimates
        .iter()
        .zip(&reference.estimates)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(CompareReport {
        target,
        reference,
        ratios,
        overlap,
        max_discrepancy,
    })
}

pub fn universality_compare_with(dist: &EntryDistribution, n: usize, eps_grid: &[f64], trials: u64, seed: u64) -> Result<CompareReport> {
    let target = tail_estimate(dist, n, eps_grid, trials, seed)?;
    let reference = tail_estimate(&EntryDistribution::gaussian(), n, eps_grid, trials, reference_seed(seed))?;
    compare_estimates(target, reference)
}

pub fn universality_compare(cfg: &ExperimentConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let dist = cfg.distribution()?;
    let grid = cfg.eps_grid.resolve()?;
    let workers = resolve_workers(cfg.workers)?;
    with_pool(workers, || universality_compare_with(&dist, cfg.n, &grid, cfg.trials, cfg.seed))?
}

pub const EVENT_NAMES: [&str; 8] = ["r1", "r2", "r3", "r4", "r", "e_flat", "e_lcd", "e_star"];

/// Frequencies of the regularity events over the first `trials` matrices of
/// `seed`; rank-deficient trials are dropped and counted in `skipped`.
pub fn event_summary(dist: &EntryDistribution, n: usize, trials: u64, seed: u64, params: &ProfileParams) -> Result<(Table, u64)> {
    let mut table = Table::new(&["event", "count", "trials", "estimate", "ci_low", "ci_high"]);
    if n < 16 {
        return Ok((table, 0));
    }
    let flags: Vec<Option<[bool; 8]>> = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; n * n],
            |buf, t| {
                fill_matrix_trial(dist, seed, t, buf);
                let m = Array2::from_shape_vec((n, n), buf.clone()).expect("shape");
                let p = regularity_profile(&m, params)?;
                Ok((!p.skipped()).then(|| [p.r1, p.r2, p.r3, p.r4, p.r(), p.e_flat, p.e_lcd, p.e_star]))
            },
        )
        .collect::<Result<_>>()?;
    let kept: Vec<[bool; 8]> = flags.iter().flatten().copied().collect();
    let total = kept.len() as u64;
    for (i, name) in EVENT_NAMES.iter().enumerate() {
        let count = kept.iter().filter(|f| f[i]).count() as u64;
        let (lo, hi) = wilson(count, total.max(1));
        table.push(vec![
            name.to_string(),
            count.to_string(),
            total.to_string(),
            fmt_f(count as f64 / total.max(1) as f64),
            fmt_f(lo),
            fmt_f(hi),
        ]);
    }
    Ok((table, trials - total))
}

pub const DEFAULT_OUTPUT: &str = "lsv-out";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub tail: TailEstimate,
    pub files: Vec<PathBuf>,
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Output(format!("{}: {e}", path.display()))
}

/// Create `dir` and make sure a file can be written into it.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    let probe = dir.join(".lsv-lab-probe");
    std::fs::write(&probe, b"").map_err(|e| output_err(dir, e))?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let out_dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    prepare_output_dir(&out_dir)?;
    let dist = cfg.distribution()?;
    let grid = cfg.eps_grid.resolve()?;
    let workers = resolve_workers(cfg.workers)?;
    let event_trials = cfg.event_trials.unwrap_or(cfg.trials.min(100));
    let params = ProfileParams::default();
    let (tail, (events, skipped)) = with_pool(workers, || -> Result<_> {
        let tail = tail_estimate(&dist, cfg.n, &grid, cfg.trials, cfg.seed)?;
        let events = event_summary(&dist, cfg.n, event_trials, cfg.seed, &params)?;
        Ok((tail, events))
    })??;

    let tail_path = out_dir.join("tail.csv");
    let events_path = out_dir.join("events.csv");
    let manifest_path = out_dir.join("manifest.json");
    tail.to_table().write(&tail_path)?;
    events.write(&events_path)?;
    let manifest = json!({
        "config": cfg,
        "seed": cfg.seed,
        "eps_grid": grid,
        "library": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "workers": workers,
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "singular_atoms": tail.singular_atoms,
        "svd_fallbacks": tail.svd_fallbacks,
        "event_trials": event_trials,
        "event_skipped": skipped,
        "psi2_estimate": dist.psi2_estimate,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Output(e.to_string()))?;
    std::fs::write(&manifest_path, text + "\n").map_err(|e| output_err(&manifest_path, e))?;
    Ok(RunSummary {
        out_dir,
        tail,
        files: vec![tail_path, events_path, manifest_path],
    })
}

/// Load, validate and run a config file.
pub fn run_experiment(path: &Path) -> Result<RunSummary> {
    run_config(&ExperimentConfig::load(path)?)
}

/// 0 on success, 2 for configuration problems, 3 for output problems, 1 otherwise.
pub fn exit_code(r: &Result<impl Sized>) -> i32 {
    match r {
        Ok(_) => 0,
        Err(LabError::Config { .. }) => 2,
        Err(LabError::Output(_)) => 3,
        Err(_) => 1,
    }
}
