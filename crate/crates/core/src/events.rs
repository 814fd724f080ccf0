//! Regularity events of a sampled matrix and the empirical decay tests.
//!
//! Conventions: M* is M without its last row X; sigma_{n-k} is the k-th
//! smallest singular value of M* and v_{n-k} its right singular vector;
//! ll = max(1, ln ln n).

use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::bump::{Bump, FastPsi};
use crate::corrector;
use crate::ensemble::{fill_matrix_trial, EntryDistribution};
use crate::error::{LabError, Result};
use crate::numeric::{dot, norm2, norm_inf};
use crate::rng::{role, substream};
use crate::spectra;
use crate::stats::{mean_halfwidth, wilson};
use crate::structure::{lcd, LcdKind, LcdQuery};

/// Cells with fewer hits than this get no verdict.
pub const MIN_CELL_COUNT: u64 = 10;

pub fn loglog(n: usize) -> f64 {
    (n as f64).ln().ln().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileParams {
    pub lcd_alpha: f64,
    pub lcd_gamma: f64,
    /// Stand-in for the exponential LCD threshold.
    pub lcd_cap: f64,
    /// E_flat' asks for sup norms below n^{-flat_exponent}.
    pub flat_exponent: f64,
    pub c_sched: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams {
            lcd_alpha: 0.01,
            lcd_gamma: 0.5,
            lcd_cap: 1e4,
            flat_exponent: 0.25,
            c_sched: corrector::DEFAULT_C_SCHED,
        }
    }
}

/// The scalars every indicator is computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Witnesses {
    pub n: usize,
    /// Singular values of M*, descending.
    pub sigma: Vec<f64>,
    /// `inner[k-1]` = <v_{n-k}, X>.
    pub inner: Vec<f64>,
    pub kernel_inf: f64,
    /// |v_{n-i}|_inf for i = 1..=ell.
    pub small_inf: Vec<f64>,
    pub ell: usize,
    pub lcd_theta: Option<f64>,
    pub flat_exponent: f64,
    pub degenerate_kernel: bool,
}

impl Witnesses {
    /// sigma_{n-k}(M*), 1 <= k <= n-1.
    pub fn sigma_nk(&self, k: usize) -> f64 {
        self.sigma[self.n - 1 - k]
    }

    pub fn ll(&self) -> f64 {
        loglog(self.n)
    }

    /// floor(ll^2) clamped to [1, n-1].
    pub fn k3(&self) -> usize {
        ((self.ll() * self.ll()).floor() as usize).clamp(1, self.n - 1)
    }

    fn inv_sqrt_n(&self) -> f64 {
        1.0 / (self.n as f64).sqrt()
    }

    fn sigma_ladder(&self, r: f64) -> bool {
        let start = (r.ceil() as usize).max(1);
        (start..self.n).all(|k| self.sigma_nk(k) >= (k as f64).powf(0.75) * self.inv_sqrt_n())
    }

    fn inner_caps(&self, r: f64) -> bool {
        self.inner
            .iter()
            .enumerate()
            .all(|(i, p)| p.abs() <= ((i + 1) as f64).powf(0.125).max(r))
    }

    /// Partial sum of <v_{n-i}, X>^2 over i <= k3.
    pub fn low_mass(&self) -> f64 {
        self.inner[..self.k3()].iter().map(|p| p * p).sum()
    }

    pub fn e_r(&self, r: f64) -> bool {
        self.inner_caps(r) && self.sigma_ladder(r)
    }

    pub fn evaluate(&self) -> EventFlags {
        let nf = self.n as f64;
        let ll = self.ll();
        let s = self.inv_sqrt_n();
        let r1 = self.sigma_nk(1) >= nf.ln().powi(-3) * s;
        let ladder = self.sigma_ladder(ll);
        let r2 = self.inner_caps(ll) && ladder;
        let r3 = self.sigma_nk(self.k3()) <= ll.powi(3) * s;
        let r4 = self.low_mass() >= ll;
        let flat = nf.powf(-self.flat_exponent);
        let e_flat = self.kernel_inf < flat && self.small_inf.iter().all(|x| *x < flat);
        let e_lcd = !self.degenerate_kernel && self.lcd_theta.is_none();
        let e_mid = self.sigma_nk(self.ell) <= nf.ln() * s;
        EventFlags {
            r1,
            r2,
            r3,
            r4,
            e_flat,
            e_lcd,
            e_star: r1 && ladder && r3 && e_mid && e_lcd && e_flat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventFlags {
    pub r1: bool,
    pub r2: bool,
    pub r3: bool,
    pub r4: bool,
    pub e_flat: bool,
    /// Approximate: LCD above a finite cap.
    pub e_lcd: bool,
    pub e_star: bool,
}

impl EventFlags {
    pub fn r(&self) -> bool {
        self.r1 && self.r2 && self.r3 && self.r4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventProfile {
    pub r1: bool,
    pub r2: bool,
    pub r3: bool,
    pub r4: bool,
    pub e_flat: bool,
    pub e_lcd: bool,
    pub e_star: bool,
    /// E_lcd uses a capped scan, so E* is approximate.
    pub lcd_approximate: bool,
    pub witnesses: Witnesses,
}

impl EventProfile {
    pub fn r(&self) -> bool {
        self.r1 && self.r2 && self.r3 && self.r4
    }

    pub fn e_r(&self, r: f64) -> bool {
        self.witnesses.e_r(r)
    }

    pub fn flags(&self) -> EventFlags {
        EventFlags {
            r1: self.r1,
            r2: self.r2,
            r3: self.r3,
            r4: self.r4,
            e_flat: self.e_flat,
            e_lcd: self.e_lcd,
            e_star: self.e_star,
        }
    }

    /// A rank-deficient M* has no well-defined kernel; callers skip the trial.
    pub fn skipped(&self) -> bool {
        self.witnesses.degenerate_kernel
    }
}

/// Profile of an n x n matrix, n >= 16.
pub fn regularity_profile(m: &Array2<f64>, params: &ProfileParams) -> Result<EventProfile> {
    let (n, cols) = m.dim();
    if n != cols {
        return Err(LabError::Shape(format!("need a square matrix, got {n}x{cols}")));
    }
    if n < 16 {
        return Err(LabError::InvalidArgument(format!("regularity events need n >= 16, got {n}")));
    }
    let mstar = m.slice(s![..n - 1, ..]).to_owned();
    let x: Vec<f64> = m.row(n - 1).to_vec();
    let svd = spectra::right_svd(&mstar)?;
    let degenerate = spectra::check_full_rank(&svd, spectra::frobenius(&mstar)).is_err();
    let (_, ell) = corrector::schedule(n, params.c_sched)?;
    let kernel = &svd.null_space[0];
    let inner = (1..n).map(|k| dot(&svd.vectors[n - 1 - k], &x)).collect();
    let small_inf = (1..=ell).map(|i| norm_inf(&svd.vectors[n - 1 - i])).collect();
    let lcd_theta = if degenerate {
        None
    } else {
        let q = LcdQuery::new(kernel.clone(), params.lcd_alpha, params.lcd_gamma, params.lcd_cap);
        match lcd(&q)?.kind {
            LcdKind::Found(t) => Some(t),
            LcdKind::ExceedsCap => None,
        }
    };
    let witnesses = Witnesses {
        n,
        sigma: svd.sigma,
        inner,
        kernel_inf: norm_inf(kernel),
        small_inf,
        ell,
        lcd_theta,
        flat_exponent: params.flat_exponent,
        degenerate_kernel: degenerate,
    };
    let f = witnesses.evaluate();
    Ok(EventProfile {
        r1: f.r1,
        r2: f.r2,
        r3: f.r3,
        r4: f.r4,
        e_flat: f.e_flat,
        e_lcd: f.e_lcd,
        e_star: f.e_star,
        lcd_approximate: true,
        witnesses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Underpowered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestVerdict {
    pub label: String,
    /// The grid coordinate of this cell (eps, t, k, ...).
    pub parameter: f64,
    pub count: u64,
    pub trials: u64,
    pub statistic: f64,
    pub bound_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub outcome: Outcome,
}

impl TestVerdict {
    fn cell(label: &str, parameter: f64, count: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson(count, trials);
        TestVerdict {
            label: label.to_string(),
            parameter,
            count,
            trials,
            statistic: f64::NAN,
            bound_value: f64::NAN,
            ci_low,
            ci_high,
            outcome: Outcome::Underpowered,
        }
    }

    pub fn estimate(&self) -> f64 {
        self.count as f64 / self.trials.max(1) as f64
    }

    pub fn powered(&self) -> bool {
        self.count >= MIN_CELL_COUNT
    }

    pub fn pass(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    fn decide(&mut self, ok: bool) {
        self.outcome = if !self.powered() {
            Outcome::Underpowered
        } else if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
    }
}

fn check_unit(v: &[f64], what: &str) -> Result<()> {
    let nrm = norm2(v);
    if (nrm - 1.0).abs() > 1e-10 {
        return Err(LabError::InvalidArgument(format!("{what} must be a unit vector (norm {nrm})")));
    }
    Ok(())
}

/// Map each trial's row Y (drawn from the VECTOR substream) to a value, in trial order.
fn per_trial<T: Send>(dist: &EntryDistribution, n: usize, trials: u64, seed: u64, f: impl Fn(&[f64]) -> T + Sync) -> Vec<T> {
    (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, t| {
                let mut rng = substream(seed, t, role::VECTOR);
                dist.fill(&mut rng, buf);
                f(buf)
            },
        )
        .collect()
}

/// Whether the powered cells are strictly decreasing (or non-increasing) in order.
fn decreasing(cells: &[TestVerdict], strict: bool) -> bool {
    let powered: Vec<f64> = cells.iter().filter(|c| c.powered()).map(|c| c.statistic).collect();
    powered.windows(2).all(|w| if strict { w[1] < w[0] } else { w[1] <= w[0] })
}

/// P(|<v, Y>| <= eps) per eps. The constant C_fit is the ratio at the largest
/// eps; a cell passes when its lower CI end stays below 2 C_fit eps.
pub fn small_ball_test(v: &[f64], dist: &EntryDistribution, eps_grid: &[f64], trials: u64, seed: u64) -> Result<Vec<TestVerdict>> {
    check_unit(v, "v")?;
    check_grid(eps_grid)?;
    let proj = per_trial(dist, v.len(), trials, seed, |y| dot(v, y).abs());
    let mut cells: Vec<TestVerdict> = eps_grid
        .iter()
        .map(|&e| TestVerdict::cell("small_ball", e, proj.iter().filter(|p| **p <= e).count() as u64, trials))
        .collect();
    let last = cells.last().expect("non-empty grid");
    let c_fit = last.estimate() / last.parameter;
    for c in &mut cells {
        c.statistic = c.estimate() / c.parameter;
        c.bound_value = 2.0 * c_fit * c.parameter;
        let ok = c.ci_low <= c.bound_value;
        c.decide(ok);
    }
    Ok(cells)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(LabError::InvalidArgument("empty grid".into()));
    }
    if grid.iter().any(|e| !(*e > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::InvalidArgument("grid must be positive and strictly ascending".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecouplingReport {
    pub verdicts: Vec<TestVerdict>,
    /// <u, w>; reported whether or not orthogonality was required.
    pub inner_uw: f64,
    pub small_ball_count: u64,
    /// Count of <w, Y> > t alone, per t.
    pub tail_counts: Vec<u64>,
    pub decreasing: bool,
}

impl DecouplingReport {
    pub fn pass(&self) -> bool {
        self.decreasing && self.verdicts.iter().all(|v| v.outcome != Outcome::Fail)
    }
}

/// P(|<u,Y>| <= eps and <w,Y> > t) along `t_grid`. `eps` may be infinite.
pub fn decoupling_test(
    u: &[f64],
    w: &[f64],
    eps: f64,
    t_grid: &[f64],
    dist: &EntryDistribution,
    trials: u64,
    seed: u64,
    require_orthogonal: bool,
) -> Result<DecouplingReport> {
    check_unit(u, "u")?;
    check_unit(w, "w")?;
    if u.len() != w.len() {
        return Err(LabError::Shape("u and w differ in length".into()));
    }
    if !(eps > 0.0) {
        return Err(LabError::InvalidArgument(format!("eps = {eps} must be positive")));
    }
    let inner_uw = dot(u, w);
    if require_orthogonal && inner_uw.abs() > 1e-10 {
        return Err(LabError::InvalidArgument(format!("u and w are not orthogonal: <u,w> = {inner_uw:e}")));
    }
    let pairs = per_trial(dist, u.len(), trials, seed, |y| (dot(u, y).abs(), dot(w, y)));
    let small_ball_count = pairs.iter().filter(|p| p.0 <= eps).count() as u64;
    let scale = |t: f64| if eps.is_finite() { eps } else { 1.0 } * (-t * t / 4.0).exp();
    let mut verdicts = Vec::with_capacity(t_grid.len());
    let mut tail_counts = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let joint = pairs.iter().filter(|p| p.0 <= eps && p.1 > t).count() as u64;
        tail_counts.push(pairs.iter().filter(|p| p.1 > t).count() as u64);
        let mut c = TestVerdict::cell("decoupling", t, joint, trials);
        c.statistic = c.estimate();
        verdicts.push(c);
    }
    let c_fit = verdicts.first().map(|c| c.estimate() / scale(c.parameter)).unwrap_or(0.0);
    for c in &mut verdicts {
        c.bound_value = 2.0 * c_fit * scale(c.parameter);
        let ok = c.ci_low <= c.bound_value;
        c.decide(ok);
    }
    let decreasing = decreasing(&verdicts, true);
    Ok(DecouplingReport {
        verdicts,
        inner_uw,
        small_ball_count,
        tail_counts,
        decreasing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegDepCell {
    pub verdict: TestVerdict,
    pub k: usize,
    /// k |u|_inf + sum |w_i|_inf, compared with (ln n)^{-3}.
    pub precondition_value: f64,
    pub precondition_holds: bool,
    /// max |<w_i, w_j> - delta_ij| and max |<u, w_i>|.
    pub orthonormality_error: f64,
}

/// P(|<u,Y>| <= eps and sum_j <w_j,Y>^2 <= c_small k); `c_small` may be infinite.
pub fn negative_dependence_test(
    u: &[f64],
    ws: &[Vec<f64>],
    eps: f64,
    c_small: f64,
    dist: &EntryDistribution,
    trials: u64,
    seed: u64,
) -> Result<NegDepCell> {
    check_unit(u, "u")?;
    let n = u.len();
    let k = ws.len();
    if k == 0 || ws.iter().any(|w| w.len() != n) {
        return Err(LabError::Shape("W must hold k >= 1 vectors of the length of u".into()));
    }
    let mut ortho: f64 = 0.0;
    for (i, wi) in ws.iter().enumerate() {
        ortho = ortho.max(dot(u, wi).abs());
        for (j, wj) in ws.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((dot(wi, wj) - target).abs());
        }
    }
    let precondition_value = k as f64 * norm_inf(u) + ws.iter().map(|w| norm_inf(w)).sum::<f64>();
    let precondition_holds = precondition_value <= (n as f64).ln().powi(-3);
    let limit = c_small * k as f64;
    let hits = per_trial(dist, n, trials, seed, |y| {
        dot(u, y).abs() <= eps && (limit.is_infinite() || ws.iter().map(|w| dot(w, y).powi(2)).sum::<f64>() <= limit)
    });
    let count = hits.iter().filter(|h| **h).count() as u64;
    let mut verdict = TestVerdict::cell("negdep", k as f64, count, trials);
    verdict.statistic = verdict.estimate() / eps;
    Ok(NegDepCell {
        verdict,
        k,
        precondition_value,
        precondition_holds,
        orthonormality_error: ortho,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegDepReport {
    pub cells: Vec<NegDepCell>,
    pub decreasing: bool,
}

/// Kernel vector and the k smallest right singular vectors (smallest first)
/// of the (n-1) x n matrix sampled for trial 0 of `seed`.
pub fn kernel_frame(dist: &EntryDistribution, n: usize, seed: u64, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if n < 2 || k > n - 1 {
        return Err(LabError::KOutOfRange { k, max: n.saturating_sub(1) });
    }
    let mut buf = vec![0.0; (n - 1) * n];
    fill_matrix_trial(dist, seed, 0, &mut buf);
    let mstar = Array2::from_shape_vec((n - 1, n), buf).expect("shape");
    let svd = spectra::right_svd(&mstar)?;
    spectra::check_full_rank(&svd, spectra::frobenius(&mstar))?;
    let frame = (1..=k).map(|i| svd.vectors[n - 1 - i].clone()).collect();
    Ok((svd.null_space[0].clone(), frame))
}

/// Negative dependence along `k_grid` with u the kernel and W the k smallest
/// right singular vectors of one sampled (n-1) x n matrix. Each cell passes
/// when its ratio to eps is strictly below the previous powered cell's.
pub fn negdep_suite(
    n: usize,
    dist: &EntryDistribution,
    k_grid: &[usize],
    eps: f64,
    c_small: f64,
    trials: u64,
    seed: u64,
) -> Result<NegDepReport> {
    let kmax = k_grid.iter().copied().max().unwrap_or(0);
    if kmax == 0 || kmax > n - 1 || k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::InvalidArgument("k grid must be ascending within 1..n-1".into()));
    }
    let (u, frame) = kernel_frame(dist, n, seed, kmax)?;
    let mut cells = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        cells.push(negative_dependence_test(&u, &frame[..k], eps, c_small, dist, trials, seed)?);
    }
    let mut prev: Option<f64> = None;
    for c in &mut cells {
        c.verdict.bound_value = prev.unwrap_or(f64::INFINITY);
        let ok = c.verdict.statistic < c.verdict.bound_value;
        c.verdict.decide(ok);
        if c.verdict.powered() {
            prev = Some(c.verdict.statistic);
        }
    }
    let verdicts: Vec<TestVerdict> = cells.iter().map(|c| c.verdict.clone()).collect();
    Ok(NegDepReport {
        decreasing: decreasing(&verdicts, true),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTailReport {
    /// P(sigma_{n-k} < c k n^{-1/2}) per k.
    pub lower: Vec<TestVerdict>,
    /// P(sigma_{n-k} >= t k n^{-1/2}); `upper[i][j]` for k_grid[i], t_grid[j].
    pub upper: Vec<Vec<TestVerdict>>,
    pub lower_monotone: bool,
    pub upper_monotone: bool,
}

impl SigmaTailReport {
    pub fn pass(&self) -> bool {
        self.lower_monotone && self.upper_monotone
    }
}

/// Lower and upper tails of the small singular values of (n-1) x n matrices.
pub fn sigma_tail_tests(
    dist: &EntryDistribution,
    n: usize,
    k_grid: &[usize],
    t_grid: &[f64],
    c_low: f64,
    trials: u64,
    seed: u64,
) -> Result<SigmaTailReport> {
    if n < 2 || k_grid.is_empty() || k_grid.iter().any(|&k| k == 0 || k > n - 1) {
        return Err(LabError::InvalidArgument(format!("k grid must lie in 1..={}", n.saturating_sub(1))));
    }
    check_grid(t_grid)?;
    let sigmas: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; (n - 1) * n],
            |buf, t| {
                fill_matrix_trial(dist, seed, t, buf);
                let s = spectra::singular_values_raw(buf.clone(), n - 1, n).expect("finite sample");
                k_grid.iter().map(|&k| s[n - 1 - k]).collect()
            },
        )
        .collect();
    let scale = 1.0 / (n as f64).sqrt();
    let mut lower = Vec::with_capacity(k_grid.len());
    let mut upper = Vec::with_capacity(k_grid.len());
    for (i, &k) in k_grid.iter().enumerate() {
        let kf = k as f64;
        let count = sigmas.iter().filter(|s| s[i] < c_low * kf * scale).count() as u64;
        let mut c = TestVerdict::cell("sigma_lower", kf, count, trials);
        c.statistic = c.estimate();
        lower.push(c);
        let mut row = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let count = sigmas.iter().filter(|s| s[i] >= t * kf * scale).count() as u64;
            let mut c = TestVerdict::cell("sigma_upper", t, count, trials);
            c.statistic = c.estimate();
            row.push(c);
        }
        upper.push(row);
    }
    let chain = |cells: &mut Vec<TestVerdict>| {
        let mut prev: Option<f64> = None;
        for c in cells.iter_mut() {
            c.bound_value = prev.unwrap_or(1.0);
            let ok = c.statistic <= c.bound_value;
            c.decide(ok);
            if c.powered() {
                prev = Some(c.statistic);
            }
        }
    };
    chain(&mut lower);
    upper.iter_mut().for_each(|r| chain(r));
    Ok(SigmaTailReport {
        lower_monotone: decreasing(&lower, false),
        upper_monotone: upper.iter().all(|r| decreasing(r, false)),
        lower,
        upper,
    })
}

/// Test functions with a known third-derivative bound.
#[derive(Debug, Clone)]
pub enum TestFunction {
    /// f(x) = mean_j psi(<u_j, x> / scale).
    Bump { scale: f64 },
    /// f(x) = mean_j <u_j, x>.
    Linear,
    /// No derivative bound registered.
    Custom(fn(f64) -> f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindebergReport {
    pub gap: f64,
    pub halfwidth: f64,
    pub bound: f64,
    pub moment_factor: f64,
    pub derivative_sum: f64,
    pub mean_x: f64,
    pub mean_z: f64,
    pub trials: u64,
    pub pass: bool,
}

/// Paired comparison of E f(X) and E f(Z) against
/// max_i [E|X_i|^3 + E|Z_i|^3] * sum_i |d^3 f / dx_i^3|_inf.
pub fn lindeberg_gap_test(
    u_set: &[Vec<f64>],
    dist: &EntryDistribution,
    f: &TestFunction,
    trials: u64,
    seed: u64,
) -> Result<LindebergReport> {
    let m = u_set.len();
    if m == 0 {
        return Err(LabError::InvalidArgument("empty u set".into()));
    }
    let n = u_set[0].len();
    if u_set.iter().any(|u| u.len() != n) {
        return Err(LabError::Shape("u vectors differ in length".into()));
    }
    let cubes: f64 = u_set.iter().flat_map(|u| u.iter()).map(|x| x.abs().powi(3)).sum::<f64>() / m as f64;
    let (derivative_sum, psi): (f64, Option<(FastPsi, f64)>) = match f {
        TestFunction::Bump { scale } => {
            if !(*scale > 0.0) {
                return Err(LabError::InvalidArgument(format!("scale = {scale} must be positive")));
            }
            let bump = Bump::default();
            let m3 = bump.third_derivative_bound();
            (cubes * m3 / scale.powi(3), Some((bump.fast(), *scale)))
        }
        TestFunction::Linear => (0.0, None),
        TestFunction::Custom(_) => {
            return Err(LabError::Unsupported("test function has no registered third-derivative bound".into()))
        }
    };
    let eval = |y: &[f64]| -> f64 {
        let s: f64 = u_set
            .iter()
            .map(|u| {
                let p = dot(u, y);
                match &psi {
                    Some((fp, scale)) => fp.psi(p / scale),
                    None => p,
                }
            })
            .sum();
        s / m as f64
    };
    let gauss = EntryDistribution::gaussian();
    let pairs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(x, z), t| {
                dist.fill(&mut substream(seed, t, role::PAIRED), x);
                gauss.fill(&mut substream(seed, t, role::GAUSSIAN_PAIR), z);
                (eval(x), eval(z))
            },
        )
        .collect();
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let (mean, halfwidth) = mean_halfwidth(&diffs);
    let tn = trials.max(1) as f64;
    let moment_factor = dist.abs_moment(3.0) + gauss.abs_moment(3.0);
    let bound = moment_factor * derivative_sum;
    Ok(LindebergReport {
        gap: mean.abs(),
        halfwidth,
        bound,
        moment_factor,
        derivative_sum,
        mean_x: pairs.iter().map(|p| p.0).sum::<f64>() / tn,
        mean_z: pairs.iter().map(|p| p.1).sum::<f64>() / tn,
        trials,
        pass: mean.abs() <= bound + 3.0 * halfwidth,
    })
}
