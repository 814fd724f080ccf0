//! A smooth bump psi >= 0 with psi-hat >= 0 supported in [-1, 1].
//!
//! Start from b(t) = exp(-1/(1-4t^2)) on |t| < 1/2 and its inverse transform
//! psi*(x) = int b(t) e^{2 pi i t x} dt. Then psi = psi*^2 / Z has transform
//! (b * b) / Z, supported in [-1, 1] and nonnegative, and Z = int b^2 makes
//! int psi = 1. The transform convention is psi-hat(t) = int psi(x) e^{-2 pi i t x} dx.

use std::f64::consts::PI;

use crate::error::{LabError, Result};

pub const DEFAULT_TOL: f64 = 1e-13;
const MAX_DEPTH: u32 = 40;

/// exp(-1/(1-4x^2)) on |x| < 1/2, else 0.
pub fn psihat_base(x: f64) -> f64 {
    let q = 1.0 - 4.0 * x * x;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson over `panels` equal panels, absolute tolerance `tol` overall.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let ptol = tol / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = if p + 1 == panels { b } else { lo + h };
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_rec(&f, lo, hi, fa, fm, fb, whole, ptol, MAX_DEPTH);
    }
    total
}

fn panels_for(x: f64) -> usize {
    (4.0 * x.abs()).ceil().max(8.0) as usize
}

#[derive(Debug, Clone)]
pub struct Bump {
    tol: f64,
    z: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Bump::with_tol(DEFAULT_TOL)
    }
}

impl Bump {
    pub fn with_tol(tol: f64) -> Self {
        let z = 2.0 * adaptive_simpson(|t| psihat_base(t).powi(2), 0.0, 0.5, tol, 8);
        Bump { tol, z }
    }

    /// Z = int b^2.
    pub fn normalization(&self) -> f64 {
        self.z
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// psi*(x) = 2 int_0^{1/2} b(t) cos(2 pi t x) dt.
    pub fn psi_star(&self, x: f64) -> f64 {
        let w = 2.0 * PI * x;
        2.0 * adaptive_simpson(|t| psihat_base(t) * (w * t).cos(), 0.0, 0.5, 0.5 * self.tol, panels_for(x))
    }

    pub fn psi(&self, x: f64) -> f64 {
        let s = self.psi_star(x);
        s * s / self.z
    }

    /// (b * b)(x) / Z.
    pub fn psihat(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let lo = (-0.5f64).max(x - 0.5);
        let hi = 0.5f64.min(x + 0.5);
        adaptive_simpson(|t| psihat_base(t) * psihat_base(x - t), lo, hi, self.tol, 8) / self.z
    }

    /// psi by inverse transform of psihat; nested quadrature, for cross-checks only.
    pub fn psi_inverse(&self, x: f64, tol: f64) -> f64 {
        let w = 2.0 * PI * x;
        2.0 * adaptive_simpson(|t| self.psihat(t) * (w * t).cos(), 0.0, 1.0, tol, panels_for(x))
    }

    /// sup |psi'''| <= int psihat(t) |2 pi t|^3 dt.
    pub fn third_derivative_bound(&self) -> f64 {
        2.0 * adaptive_simpson(|t| self.psihat(t) * (2.0 * PI * t).powi(3), 0.0, 1.0, 1e-10, 16)
    }

    pub fn fast(&self) -> FastPsi {
        FastPsi::new(self.clone())
    }
}

/// Trapezoid evaluation of psi* on N nodes. Since b is smooth and vanishes to
/// all orders at +-1/2, the error is the aliased sum of psi*(x + kN), k != 0,
/// which is below 1e-15 for |x| <= FAST_RANGE.
#[derive(Debug, Clone)]
pub struct FastPsi {
    weights: Vec<f64>,
    freqs: Vec<f64>,
    bump: Bump,
}

const FAST_NODES: usize = 512;
pub const FAST_RANGE: f64 = 128.0;

impl FastPsi {
    fn new(bump: Bump) -> Self {
        let h = 1.0 / FAST_NODES as f64;
        let half = FAST_NODES / 2;
        let mut weights = Vec::with_capacity(half);
        let mut freqs = Vec::with_capacity(half);
        for j in 0..half {
            let t = j as f64 * h;
            let w = if j == 0 { h } else { 2.0 * h };
            weights.push(w * psihat_base(t));
            freqs.push(2.0 * PI * t);
        }
        FastPsi { weights, freqs, bump }
    }

    pub fn psi(&self, x: f64) -> f64 {
        if x.abs() > FAST_RANGE {
            return self.bump.psi(x);
        }
        let s: f64 = self
            .weights
            .iter()
            .zip(&self.freqs)
            .map(|(w, f)| w * (f * x).cos())
            .sum();
        s * s / self.bump.z
    }
}

#[derive(Debug, Clone)]
pub struct BumpTable {
    /// Symmetric grid -grid_max..=grid_max.
    pub grid: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub psihat_grid: Vec<f64>,
    pub psihat_values: Vec<f64>,
    pub normalization: f64,
    pub decay_constant_fit: f64,
    pub step: f64,
}

impl BumpTable {
    pub fn build(bump: &Bump, grid_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && grid_max > 0.0 && step.is_finite() && grid_max.is_finite()) {
            return Err(LabError::InvalidArgument(format!("grid_max = {grid_max}, step = {step}")));
        }
        let half = (grid_max / step + 1e-9).floor() as usize;
        let pos: Vec<f64> = (0..=half).map(|k| bump.psi(k as f64 * step)).collect();
        let mut grid = Vec::with_capacity(2 * half + 1);
        let mut psi_values = Vec::with_capacity(2 * half + 1);
        for k in (1..=half).rev() {
            grid.push(-(k as f64) * step);
            psi_values.push(pos[k]);
        }
        for (k, v) in pos.iter().enumerate() {
            grid.push(k as f64 * step);
            psi_values.push(*v);
        }
        let psihat_grid: Vec<f64> = (0..=200).map(|k| -1.0 + k as f64 * 0.01).collect();
        let psihat_values = psihat_grid.iter().map(|&t| bump.psihat(t)).collect();
        let mut table = BumpTable {
            grid,
            psi_values,
            psihat_grid,
            psihat_values,
            normalization: bump.normalization(),
            decay_constant_fit: 0.0,
            step,
        };
        table.decay_constant_fit = table.decay_fit_within(f64::INFINITY);
        Ok(table)
    }

    /// Largest c with psi(x) <= exp(-c sqrt(|x|+1)) on grid points with |x| <= xmax.
    /// Points where psi vanishes impose no constraint.
    pub fn decay_fit_within(&self, xmax: f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.psi_values)
            .filter(|(x, p)| x.abs() <= xmax && **p > 0.0)
            .map(|(x, p)| -p.ln() / (x.abs() + 1.0).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid integral over the grid. For step <= 1 this is exact up to
    /// truncation and quadrature error, since psi is band-limited to [-1, 1].
    pub fn integral(&self) -> f64 {
        let n = self.psi_values.len();
        let inner: f64 = self.psi_values.iter().sum();
        self.step * (inner - 0.5 * (self.psi_values[0] + self.psi_values[n - 1]))
    }

    /// Majorant of the mass outside the grid from a decay fit on its outer half.
    pub fn tail_bound(&self) -> f64 {
        let xmax = self.grid.last().copied().unwrap_or(0.0);
        let c = self
            .grid
            .iter()
            .zip(&self.psi_values)
            .filter(|(x, p)| x.abs() >= 0.5 * xmax && **p > 0.0)
            .map(|(x, p)| -p.ln() / (x.abs() + 1.0).sqrt())
            .fold(f64::INFINITY, f64::min);
        if !c.is_finite() || c <= 0.0 {
            return f64::INFINITY;
        }
        // 2 int_X^inf e^{-c sqrt(x+1)} dx = 4 e^{-cU} (U/c + 1/c^2), U = sqrt(X+1)
        let u = (xmax + 1.0).sqrt();
        4.0 * (-c * u).exp() * (u / c + 1.0 / (c * c))
    }

    /// int psihat^2 by Simpson on the psihat grid and int psi^2 by trapezoid on the x grid.
    pub fn plancherel_pair(&self) -> (f64, f64) {
        let h = 0.01;
        let m = self.psihat_values.len() - 1;
        let mut s = 0.0;
        for (k, v) in self.psihat_values.iter().enumerate() {
            let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * v * v;
        }
        let direct = s * h / 3.0;
        let n = self.psi_values.len();
        let sq: f64 = self.psi_values.iter().map(|p| p * p).sum();
        let dual = self.step * (sq - 0.5 * (self.psi_values[0].powi(2) + self.psi_values[n - 1].powi(2)));
        (direct, dual)
    }
}

/// Largest c with psi(x) <= exp(-c (|x|+1)^{1/2}) on the grid.
pub fn decay_certificate(grid_max: f64, step: f64) -> Result<f64> {
    decay_certificate_with(&Bump::default(), grid_max, step)
}

pub fn decay_certificate_with(bump: &Bump, grid_max: f64, step: f64) -> Result<f64> {
    if !(grid_max >= 10.0) {
        return Err(LabError::InvalidArgument(format!("grid_max = {grid_max} must be >= 10")));
    }
    let c = BumpTable::build(bump, grid_max, step)?.decay_constant_fit;
    if !(c > 0.0) {
        return Err(LabError::Construction(format!("decay fit c = {c} is not positive")));
    }
    Ok(c)
}
