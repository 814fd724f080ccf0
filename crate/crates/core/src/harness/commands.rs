//! One table-producing function per CLI subcommand. Callers choose the pool;
//! every function here is deterministic in its arguments.

use std::path::Path;

use ndarray::{s, Array2};
use rayon::prelude::*;

use super::table::{fmt_f, Table};
use crate::bump::{Bump, BumpTable};
use crate::corrector::CorrectionContext;
use crate::ensemble::{fill_matrix_trial, sample_matrix_trial, DistSpec, EntryDistribution};
use crate::error::{LabError, Result};
use crate::events::{
    decoupling_test, kernel_frame, lindeberg_gap_test, negdep_suite, regularity_profile, sigma_tail_tests, small_ball_test,
    ProfileParams, TestFunction, TestVerdict,
};
use crate::numeric::norm2;
use crate::rng::{role, substream};
use crate::secular::{secular_least, secular_spectrum, SecularProblem};
use crate::spectra;
use crate::structure::{lcd, LcdKind, LcdQuery};

/// Sampling parameters shared by the Monte Carlo subcommands.
#[derive(Debug, Clone)]
pub struct Sampling {
    pub dist: EntryDistribution,
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
}

/// `gaussian`, `rademacher`, `uniform`, `discrete:<support>:<probs>` with
/// comma-separated lists, or a JSON object as in config files.
pub fn parse_dist(s: &str) -> Result<EntryDistribution> {
    let s = s.trim();
    let spec = if s.starts_with('{') {
        serde_json::from_str::<DistSpec>(s).map_err(|e| LabError::config("dist", e.to_string()))?
    } else {
        let mut parts = s.split(':');
        match parts.next().unwrap_or("").to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => DistSpec::Gaussian,
            "rademacher" | "sign" => DistSpec::Rademacher,
            "uniform" => DistSpec::Uniform,
            "discrete" => {
                let list = |p: Option<&str>, what: &str| -> Result<Vec<f64>> {
                    p.ok_or_else(|| LabError::config("dist", format!("discrete law needs {what}")))?
                        .split(',')
                        .map(|x| x.trim().parse::<f64>().map_err(|e| LabError::config("dist", format!("{what}: {e}"))))
                        .collect()
                };
                let support = list(parts.next(), "support")?;
                let probs = list(parts.next(), "probabilities")?;
                DistSpec::Discrete { support, probs }
            }
            other => return Err(LabError::config("dist", format!("unknown law `{other}`"))),
        }
    };
    EntryDistribution::from_spec(&spec).map_err(|e| LabError::config("dist", e.to_string()))
}

/// One real per line; blank lines and `#` comments are ignored.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::config("vector", format!("{}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().map_err(|e| LabError::config("vector", format!("`{l}`: {e}"))))
        .collect()
}

/// `ones:<n>` or `golden`, normalized; anything else is read as a file.
pub fn builtin_or_file(spec: &str) -> Result<Vec<f64>> {
    let v = if let Some(n) = spec.strip_prefix("ones:") {
        let n: usize = n.parse().map_err(|_| LabError::config("vector", format!("bad length in `{spec}`")))?;
        if n == 0 {
            return Err(LabError::config("vector", "length must be positive"));
        }
        vec![1.0; n]
    } else if spec == "golden" {
        vec![1.0, (1.0 + 5f64.sqrt()) / 2.0]
    } else {
        read_vector(Path::new(spec))?
    };
    let nrm = norm2(&v);
    if !(nrm > 0.0 && nrm.is_finite()) {
        return Err(LabError::config("vector", "vector must be non-zero and finite"));
    }
    Ok(v.iter().map(|x| x / nrm).collect())
}

fn yes(b: bool) -> String {
    (if b { "1" } else { "0" }).to_string()
}

fn check_sampling(c: &Sampling, min_n: usize) -> Result<()> {
    if c.n < min_n {
        return Err(LabError::config("n", format!("need n >= {min_n}, got {}", c.n)));
    }
    if c.trials == 0 {
        return Err(LabError::config("trials", "need at least one trial"));
    }
    Ok(())
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if *y == 0.0 { x.abs() } else { ((x - y) / y).abs() })
        .fold(0.0, f64::max)
}

/// Secular roots against the direct SVD of the stacked matrix, per trial.
pub fn secular_check(c: &Sampling) -> Result<Table> {
    check_sampling(c, 2)?;
    let n = c.n;
    let rows: Vec<Vec<String>> = (0..c.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<String>> {
            let m = sample_matrix_trial(&c.dist, n, n, c.seed, t)?;
            let want = spectra::singular_values(&m.entries)?;
            if want[n - 1] <= spectra::RANK_TOL * want[0] {
                return Ok(vec![t.to_string(), n.to_string(), "NaN".into(), "NaN".into(), "skipped".into()]);
            }
            let astar = m.entries.slice(s![..n - 1, ..]).to_owned();
            let p = SecularProblem::from_rows(&astar, &m.entries.row(n - 1).to_vec())?;
            let got = secular_spectrum(&p)?;
            let least = secular_least(&p, 0.0)?;
            Ok(vec![
                t.to_string(),
                n.to_string(),
                fmt_f(max_rel(&got, &want)),
                fmt_f(((least.value - want[n - 1]) / want[n - 1]).abs()),
                format!("{:?}", least.status).to_lowercase(),
            ])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["trial", "n", "max_rel_err", "least_rel_err", "status"]);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

/// Truncated and full correction factors of the last row against the rest.
/// The R indicator needs n >= 16 and is left empty below that.
pub fn chi_check(c: &Sampling, ell: Option<usize>) -> Result<Table> {
    check_sampling(c, 3)?;
    let n = c.n;
    let params = ProfileParams {
        lcd_cap: 0.0,
        ..ProfileParams::default()
    };
    let rows: Vec<Vec<String>> = (0..c.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<String>> {
            let m = sample_matrix_trial(&c.dist, n, n, c.seed, t)?;
            let astar = m.entries.slice(s![..n - 1, ..]).to_owned();
            let y = m.entries.row(n - 1).to_vec();
            let ctx = CorrectionContext::from_matrix(&astar, ell, None)?;
            let r = if n >= 16 {
                yes(regularity_profile(&m.entries, &params)?.r())
            } else {
                String::new()
            };
            match (ctx.chi_trunc(&y), ctx.chi_full(&y), ctx.truncation_gap(&y)) {
                (Ok(chi), Ok(full), Ok(gap)) => Ok(vec![
                    t.to_string(),
                    ctx.ell.to_string(),
                    fmt_f(chi),
                    fmt_f(full),
                    fmt_f(gap),
                    r,
                    yes(chi <= full),
                    "ok".into(),
                ]),
                (Err(LabError::DivisionDegenerate(_)), ..) | (_, Err(LabError::DivisionDegenerate(_)), _) => Ok(vec![
                    t.to_string(),
                    ctx.ell.to_string(),
                    "NaN".into(),
                    "NaN".into(),
                    "NaN".into(),
                    r,
                    String::new(),
                    "skipped".into(),
                ]),
                (Err(e), ..) | (_, Err(e), _) | (.., Err(e)) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["trial", "ell", "chi", "chi_full", "gap", "r", "dominated", "status"]);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

/// Per-trial regularity indicators.
pub fn events(c: &Sampling, params: &ProfileParams) -> Result<Table> {
    check_sampling(c, 16)?;
    let n = c.n;
    let rows: Vec<Vec<String>> = (0..c.trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; n * n],
            |buf, t| -> Result<Vec<String>> {
                fill_matrix_trial(&c.dist, c.seed, t, buf);
                let m = Array2::from_shape_vec((n, n), buf.clone()).expect("shape");
                let p = regularity_profile(&m, params)?;
                let w = &p.witnesses;
                Ok(vec![
                    t.to_string(),
                    yes(p.r1),
                    yes(p.r2),
                    yes(p.r3),
                    yes(p.r4),
                    yes(p.r()),
                    yes(p.e_flat),
                    yes(p.e_lcd),
                    yes(p.e_star),
                    yes(p.skipped()),
                    fmt_f(w.sigma_nk(1) * (n as f64).sqrt()),
                    fmt_f(w.low_mass()),
                    fmt_f(w.kernel_inf),
                ])
            },
        )
        .collect::<Result<_>>()?;
    let mut t = Table::new(&[
        "trial", "r1", "r2", "r3", "r4", "r", "e_flat", "e_lcd", "e_star", "skipped", "sigma_n1_sqrt_n", "low_mass",
        "kernel_inf",
    ]);
    rows.into_iter().for_each(|r| t.push(r));
    Ok(t)
}

pub const VERDICT_HEADER: [&str; 11] =
    ["label", "group", "parameter", "count", "trials", "estimate", "ci_low", "ci_high", "statistic", "bound", "outcome"];

pub fn push_verdict(t: &mut Table, group: &str, v: &TestVerdict) {
    t.push(vec![
        v.label.clone(),
        group.to_string(),
        fmt_f(v.parameter),
        v.count.to_string(),
        v.trials.to_string(),
        fmt_f(v.estimate()),
        fmt_f(v.ci_low),
        fmt_f(v.ci_high),
        fmt_f(v.statistic),
        fmt_f(v.bound_value),
        format!("{:?}", v.outcome).to_lowercase(),
    ]);
}

/// Small-ball profile of the kernel vector of a sampled (n-1) x n matrix.
pub fn smallball(c: &Sampling, eps_grid: &[f64]) -> Result<Table> {
    check_sampling(c, 2)?;
    let (u, _) = kernel_frame(&c.dist, c.n, c.seed, 0)?;
    let cells = small_ball_test(&u, &c.dist, eps_grid, c.trials, c.seed)?;
    let mut t = Table::new(&VERDICT_HEADER);
    cells.iter().for_each(|v| push_verdict(&mut t, "", v));
    Ok(t)
}

/// Decoupling along `t_grid` with u the kernel and w the smallest singular vector.
pub fn decouple(c: &Sampling, eps: f64, t_grid: &[f64]) -> Result<Table> {
    check_sampling(c, 2)?;
    let (u, frame) = kernel_frame(&c.dist, c.n, c.seed, 1)?;
    let rep = decoupling_test(&u, &frame[0], eps, t_grid, &c.dist, c.trials, c.seed, false)?;
    let mut t = Table::new(&VERDICT_HEADER);
    rep.verdicts.iter().for_each(|v| push_verdict(&mut t, &fmt_f(eps), v));
    Ok(t)
}

pub fn negdep(c: &Sampling, eps: f64, c_small: f64, k_grid: &[usize]) -> Result<Table> {
    check_sampling(c, 2)?;
    let rep = negdep_suite(c.n, &c.dist, k_grid, eps, c_small, c.trials, c.seed)?;
    let mut header: Vec<&str> = VERDICT_HEADER.to_vec();
    header.extend(["precondition_value", "precondition_holds", "orthonormality_error"]);
    let mut t = Table::new(&header);
    for cell in &rep.cells {
        let mut tmp = Table::new(&VERDICT_HEADER);
        push_verdict(&mut tmp, &cell.k.to_string(), &cell.verdict);
        let mut row = tmp.rows.pop().expect("one row");
        row.extend([fmt_f(cell.precondition_value), yes(cell.precondition_holds), fmt_f(cell.orthonormality_error)]);
        t.push(row);
    }
    Ok(t)
}

pub fn sigtails(c: &Sampling, k_grid: &[usize], t_grid: &[f64], c_low: f64) -> Result<Table> {
    check_sampling(c, 2)?;
    let rep = sigma_tail_tests(&c.dist, c.n, k_grid, t_grid, c_low, c.trials, c.seed)?;
    let mut t = Table::new(&VERDICT_HEADER);
    rep.lower.iter().for_each(|v| push_verdict(&mut t, &fmt_f(c_low), v));
    for (k, row) in k_grid.iter().zip(&rep.upper) {
        row.iter().for_each(|v| push_verdict(&mut t, &k.to_string(), v));
    }
    Ok(t)
}

/// `m` unit directions drawn from the ROW substreams of `seed`.
pub fn random_directions(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let g = EntryDistribution::gaussian();
    (0..m as u64)
        .map(|j| {
            let v = g.sample_vector(&mut substream(seed, j, role::ROW), n);
            let nrm = norm2(&v);
            v.into_iter().map(|x| x / nrm).collect()
        })
        .collect()
}

pub fn lindeberg(c: &Sampling, directions: usize, scale: f64) -> Result<Table> {
    check_sampling(c, 2)?;
    if directions == 0 {
        return Err(LabError::config("directions", "need at least one direction"));
    }
    let u_set = random_directions(c.n, directions, c.seed);
    let rep = lindeberg_gap_test(&u_set, &c.dist, &TestFunction::Bump { scale }, c.trials, c.seed)?;
    let mut t = Table::new(&[
        "n", "directions", "scale", "trials", "gap", "halfwidth", "bound", "moment_factor", "derivative_sum", "mean_x",
        "mean_z", "pass",
    ]);
    t.push(vec![
        c.n.to_string(),
        directions.to_string(),
        fmt_f(scale),
        rep.trials.to_string(),
        fmt_f(rep.gap),
        fmt_f(rep.halfwidth),
        fmt_f(rep.bound),
        fmt_f(rep.moment_factor),
        fmt_f(rep.derivative_sum),
        fmt_f(rep.mean_x),
        fmt_f(rep.mean_z),
        yes(rep.pass),
    ]);
    Ok(t)
}

pub fn lcd_table(v: Vec<f64>, alpha: f64, gamma: f64, cap: f64) -> Result<Table> {
    let n = v.len();
    let r = lcd(&LcdQuery::new(v, alpha, gamma, cap))?;
    let (kind, theta) = match r.kind {
        LcdKind::Found(t) => ("found", fmt_f(t)),
        LcdKind::ExceedsCap => ("exceeds_cap", String::new()),
    };
    let mut t = Table::new(&["n", "alpha", "gamma", "cap", "result", "theta", "certificate_gap", "evaluations", "empty_scan"]);
    t.push(vec![
        n.to_string(),
        fmt_f(alpha),
        fmt_f(gamma),
        fmt_f(cap),
        kind.into(),
        theta,
        fmt_f(r.certificate_gap),
        r.evaluations.to_string(),
        yes(r.empty_scan),
    ]);
    Ok(t)
}

/// (x, psi(x), exp(-c sqrt(|x|+1))) with c the certified decay constant.
pub fn bump_table(grid_max: f64, step: f64) -> Result<Table> {
    let table = BumpTable::build(&Bump::default(), grid_max, step)?;
    let c = table.decay_constant_fit;
    if !(c > 0.0) {
        return Err(LabError::Construction(format!("decay fit c = {c} is not positive")));
    }
    let mut t = Table::new(&["x", "psi", "bound"]);
    for (x, p) in table.grid.iter().zip(&table.psi_values) {
        t.push(vec![fmt_f(*x), fmt_f(*p), fmt_f((-c * (x.abs() + 1.0).sqrt()).exp())]);
    }
    Ok(t)
}
