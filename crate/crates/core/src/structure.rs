//! Arithmetic structure of unit vectors: torus norm, LCD, exact characteristic
//! functions of product laws, and flatness of small singular directions.

use ndarray::Array2;

use crate::ensemble::EntryDistribution;
use crate::error::{LabError, Result};
use crate::numeric::{norm2, norm_inf};
use crate::spectra;

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.5;
/// Bisection resolution for a located crossing.
const REFINE_TOL: f64 = 1e-9;
/// Smallest scan step; crossings narrower than this can be missed.
const MIN_STEP: f64 = 1e-10;
const R_GRID_POINTS: usize = 1000;
const BOUND_SLACK: f64 = 1e-6;

/// Distance from `v` to the integer lattice.
pub fn torus_norm(v: &[f64]) -> f64 {
    v.iter()
        .map(|x| {
            let f = x - x.round();
            f * f
        })
        .sum::<f64>()
        .sqrt()
}

fn scaled_torus_norm(v: &[f64], theta: f64) -> f64 {
    v.iter()
        .map(|x| {
            let y = theta * x;
            let f = y - y.round();
            f * f
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcdQuery {
    pub v: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub theta_cap: f64,
    /// Largest scan step; smaller steps are taken where the Lipschitz margin demands.
    pub grid_step: f64,
    /// Evaluation budget for the scan.
    pub max_evals: usize,
}

impl LcdQuery {
    pub fn new(v: Vec<f64>, alpha: f64, gamma: f64, theta_cap: f64) -> Self {
        LcdQuery {
            v,
            alpha,
            gamma,
            theta_cap,
            grid_step: gamma / 4.0,
            max_evals: 10_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.v.is_empty() || self.v.iter().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidArgument("v must be non-empty and finite".into()));
        }
        let nrm = norm2(&self.v);
        if (nrm - 1.0).abs() > 1e-12 {
            return Err(LabError::InvalidArgument(format!("v must be a unit vector, |v| = {nrm}")));
        }
        if !(self.alpha > 0.0) {
            return Err(LabError::InvalidArgument(format!("alpha = {} must be positive", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(LabError::InvalidArgument(format!("gamma = {} outside (0, 1)", self.gamma)));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= self.gamma / 4.0) {
            return Err(LabError::InvalidArgument(format!(
                "grid_step = {} must lie in (0, gamma/4]",
                self.grid_step
            )));
        }
        if !(self.theta_cap >= 0.0 && self.theta_cap.is_finite()) {
            return Err(LabError::InvalidArgument("theta_cap must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// dist(theta v, Z^n) - min(gamma theta, sqrt(alpha n)); negative inside the LCD set.
    pub fn margin(&self, theta: f64) -> f64 {
        let thresh = (self.gamma * theta).min((self.alpha * self.v.len() as f64).sqrt());
        scaled_torus_norm(&self.v, theta) - thresh
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LcdKind {
    Found(f64),
    ExceedsCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcdResult {
    pub kind: LcdKind,
    /// Smallest margin seen over the scan (only meaningful for `ExceedsCap`).
    pub certificate_gap: f64,
    pub evaluations: usize,
    pub empty_scan: bool,
}

/// Scan (0, cap] for the first theta in the LCD set.
///
/// Below 1/(2|v|_inf) every coordinate of theta v is within 1/2 of 0, so the
/// distance is theta > gamma theta and the set is empty there. Beyond that,
/// the margin is (1+gamma)-Lipschitz, so from a point with margin g > 0 no
/// crossing occurs within g/(1+gamma).
pub fn lcd(q: &LcdQuery) -> Result<LcdResult> {
    q.validate()?;
    if q.theta_cap == 0.0 {
        return Ok(LcdResult {
            kind: LcdKind::ExceedsCap,
            certificate_gap: f64::INFINITY,
            evaluations: 0,
            empty_scan: true,
        });
    }
    let lip = 1.0 + q.gamma;
    let mut theta = (0.5 / norm_inf(&q.v)).min(q.theta_cap);
    let mut prev: Option<f64> = None;
    let mut worst = f64::INFINITY;
    let mut evals = 0usize;
    loop {
        let g = q.margin(theta);
        evals += 1;
        if g < 0.0 {
            let lo = prev.unwrap_or(theta);
            let found = refine(q, lo, theta, &mut evals);
            return Ok(LcdResult {
                kind: LcdKind::Found(found),
                certificate_gap: worst,
                evaluations: evals,
                empty_scan: false,
            });
        }
        worst = worst.min(g);
        if theta >= q.theta_cap {
            break;
        }
        if evals >= q.max_evals {
            return Err(LabError::Budget {
                reached: theta,
                margin: worst,
            });
        }
        let step = (g / lip).min(q.grid_step).max(MIN_STEP);
        prev = Some(theta);
        theta = (theta + step).min(q.theta_cap);
    }
    Ok(LcdResult {
        kind: LcdKind::ExceedsCap,
        certificate_gap: worst,
        evaluations: evals,
        empty_scan: false,
    })
}

/// Shrink [lo, hi] (margin(lo) >= 0 > margin(hi)) to REFINE_TOL; returns hi.
fn refine(q: &LcdQuery, mut lo: f64, mut hi: f64, evals: &mut usize) -> f64 {
    while hi - lo > REFINE_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        *evals += 1;
        if q.margin(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// |E exp(i <u, Y>)| for Y with iid entries of `dist`.
pub fn char_fn_exact(dist: &EntryDistribution, u: &[f64]) -> f64 {
    u.iter().map(|&t| dist.char_fn(t).abs()).product()
}

/// Whether |phi(u)| <= exp(-c0 inf_{r in [1, 1/c0]} |r u|_T^2) + slack.
pub fn char_fn_bound_check(dist: &EntryDistribution, u: &[f64], c0: f64) -> Result<bool> {
    if !(c0 > 0.0 && c0 <= 1.0) {
        return Err(LabError::InvalidArgument(format!("c0 = {c0} outside (0, 1]")));
    }
    let lhs = char_fn_exact(dist, u);
    let r_max = 1.0 / c0;
    let points = if r_max > 1.0 { R_GRID_POINTS } else { 1 };
    let ratio = if points > 1 {
        r_max.powf(1.0 / (points - 1) as f64)
    } else {
        1.0
    };
    let mut inf = f64::INFINITY;
    let mut r = 1.0f64;
    for i in 0..points {
        if i + 1 == points {
            r = r_max;
        }
        let t = scaled_torus_norm(u, r);
        inf = inf.min(t * t);
        r *= ratio;
    }
    Ok(lhs <= (-c0 * inf).exp() + BOUND_SLACK)
}

/// (|v|_inf, |v_{n-1}|_inf, ..., |v_{n-k}|_inf) for the kernel and k smallest
/// right singular vectors of an (n-1) x n matrix.
pub fn flatness(mstar: &Array2<f64>, k: usize) -> Result<Vec<f64>> {
    let (rows, cols) = mstar.dim();
    if rows + 1 != cols {
        return Err(LabError::Shape(format!("flatness needs (n-1) x n input, got {rows}x{cols}")));
    }
    if k > rows {
        return Err(LabError::KOutOfRange { k, max: rows });
    }
    let svd = spectra::right_svd(mstar)?;
    spectra::check_full_rank(&svd, spectra::frobenius(mstar))?;
    let mut out = vec![norm_inf(&svd.null_space[0])];
    out.extend((0..k).map(|j| norm_inf(&svd.vectors[rows - 1 - j])));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn torus_examples() {
        assert_relative_eq!(torus_norm(&[0.5, 1.2]), 0.29f64.sqrt(), epsilon = 1e-15);
        assert_eq!(torus_norm(&[3.0, -2.0, 0.0]), 0.0);
        assert_relative_eq!(torus_norm(&[0.999]), 0.001, epsilon = 1e-15);
    }

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0 / (n as f64).sqrt(); n]
    }

    #[test]
    fn lcd_all_ones() {
        // at gamma = 1/2 the set opens at 2 sqrt(n) / 3, before the lattice hit
        let r = lcd(&LcdQuery::new(ones(16), 1.0, 0.5, 10.0)).unwrap();
        match r.kind {
            LcdKind::Found(t) => assert!((t - 8.0 / 3.0).abs() < 1e-8, "{t}"),
            _ => panic!("expected Found"),
        }
        // with a vanishing alpha only the lattice point itself qualifies
        let r = lcd(&LcdQuery::new(ones(16), 1e-20, 0.5, 10.0)).unwrap();
        match r.kind {
            LcdKind::Found(t) => assert!((t - 4.0).abs() < 1e-9, "{t}"),
            _ => panic!("expected Found"),
        }
    }

    #[test]
    fn lcd_golden_exceeds_cap() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let nrm = (1.0 + phi * phi).sqrt();
        let r = lcd(&LcdQuery::new(vec![1.0 / nrm, phi / nrm], 1e-6, 0.1, 50.0)).unwrap();
        assert_eq!(r.kind, LcdKind::ExceedsCap);
        assert!(r.certificate_gap > 0.0);
        assert!(!r.empty_scan);
    }

    #[test]
    fn lcd_empty_and_budget() {
        let r = lcd(&LcdQuery::new(ones(4), 1.0, 0.5, 0.0)).unwrap();
        assert!(r.empty_scan);
        assert_eq!(r.kind, LcdKind::ExceedsCap);
        let mut q = LcdQuery::new(ones(4), 1e-12, 0.5, 1e6);
        q.v = vec![0.6, 0.8];
        q.max_evals = 10;
        assert!(matches!(lcd(&q), Err(LabError::Budget { .. })));
        q.v = vec![1.0, 1.0];
        assert!(lcd(&q).is_err());
    }

    #[test]
    fn found_satisfies_definition() {
        let v = vec![0.6, 0.8];
        let q = LcdQuery::new(v, 0.5, 0.3, 100.0);
        let r = lcd(&q).unwrap();
        if let LcdKind::Found(t) = r.kind {
            assert!(q.margin(t) < 0.0);
            assert!(q.margin(t - 2e-9) >= 0.0 || q.margin(t - 1e-9) >= 0.0);
        } else {
            panic!("rational direction must be found");
        }
    }

    #[test]
    fn char_fn_examples() {
        let rad = EntryDistribution::rademacher();
        assert!(char_fn_exact(&rad, &[std::f64::consts::FRAC_PI_2, 0.3]) < 1e-16);
        assert_relative_eq!(char_fn_exact(&EntryDistribution::gaussian(), &[1.0, 1.0]), (-1f64).exp(), epsilon = 1e-15);
        assert_eq!(char_fn_exact(&rad, &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn bound_check_examples() {
        let rad = EntryDistribution::rademacher();
        assert!(char_fn_bound_check(&rad, &[0.1, -0.05, 0.07], 0.1).unwrap());
        assert!(char_fn_bound_check(&rad, &[0.0; 5], 0.1).unwrap());
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!(char_fn_bound_check(&rad, &[two_pi; 3], 0.5).unwrap());
        assert!(char_fn_bound_check(&rad, &[0.1], 0.0).is_err());
    }

    #[test]
    fn flatness_examples() {
        assert_eq!(flatness(&array![[1.0, 0.0]], 0).unwrap(), vec![1.0]);
        assert_eq!(flatness(&array![[1.0, 0.0]], 1).unwrap(), vec![1.0, 1.0]);
        // planted spike: rows orthogonal to e_3 leave the kernel at e_3
        let m = array![[0.6, 0.8, 0.0], [-0.8, 0.6, 0.0]];
        assert_relative_eq!(flatness(&m, 1).unwrap()[0], 1.0, epsilon = 1e-14);
        assert!(matches!(flatness(&array![[0.0, 0.0]], 0), Err(LabError::DegenerateKernel { .. })));
    }
}
