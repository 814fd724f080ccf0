//! Correction factors for the distance of the appended row to the kernel.
//!
//! With v_i the right singular vectors of M* (descending sigma_i),
//! chi_full^2(Y) = 1 + sum_i <v_i,Y>^2 / sigma_i^2 and chi_trunc keeps only the
//! ell smallest terms without the leading 1.

use ndarray::Array2;

use crate::error::{LabError, Result};
use crate::numeric::{dot, Neumaier};
use crate::spectra;

/// Default exponent c in delta_n = (ln n)^{-c}.
pub const DEFAULT_C_SCHED: f64 = 1.0 / 16.0;

/// (delta_n, ell) for size n.
pub fn schedule(n: usize, c_sched: f64) -> Result<(f64, usize)> {
    if n < 3 {
        return Err(LabError::InvalidArgument(format!("schedule needs n >= 3, got {n}")));
    }
    if !(c_sched > 0.0 && c_sched.is_finite()) {
        return Err(LabError::InvalidArgument(format!("c_sched = {c_sched} must be positive")));
    }
    let ln = (n as f64).ln();
    let ell = (ln.sqrt().floor() as usize).max(1).min(n - 1);
    Ok((ln.powf(-c_sched), ell))
}

#[derive(Debug, Clone)]
pub struct CorrectionContext {
    /// Singular values of M*, descending, length n-1.
    pub sigma: Vec<f64>,
    /// `vectors[i]` pairs with `sigma[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub kernel: Option<Vec<f64>>,
    pub ell: usize,
    pub delta_n: f64,
    pub c_sched: f64,
    pub n: usize,
}

impl CorrectionContext {
    /// Context for an (n-1) x n matrix. `ell` and `c_sched` default to the schedule.
    pub fn from_matrix(mstar: &Array2<f64>, ell: Option<usize>, c_sched: Option<f64>) -> Result<Self> {
        let (rows, n) = mstar.dim();
        if rows + 1 != n {
            return Err(LabError::Shape(format!("need (n-1) x n matrix, got {rows}x{n}")));
        }
        let svd = spectra::right_svd(mstar)?;
        let c_sched = c_sched.unwrap_or(DEFAULT_C_SCHED);
        let (delta_n, default_ell) = if n >= 3 {
            schedule(n, c_sched)?
        } else {
            (1.0, 1)
        };
        let ell = ell.unwrap_or(default_ell);
        if ell == 0 || ell > n - 1 {
            return Err(LabError::KOutOfRange { k: ell, max: n - 1 });
        }
        Ok(CorrectionContext {
            sigma: svd.sigma,
            vectors: svd.vectors,
            kernel: svd.null_space.into_iter().next(),
            ell,
            delta_n,
            c_sched,
            n,
        })
    }

    /// Same singular system with a different truncation length.
    pub fn with_ell(&self, ell: usize) -> Result<Self> {
        if ell == 0 || ell > self.n - 1 {
            return Err(LabError::KOutOfRange { k: ell, max: self.n - 1 });
        }
        Ok(CorrectionContext { ell, ..self.clone() })
    }

    fn check(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(LabError::Shape(format!("Y has length {}, expected {}", y.len(), self.n)));
        }
        Ok(())
    }

    fn term(&self, i: usize, y: &[f64]) -> Result<f64> {
        let s = self.sigma[i];
        if s == 0.0 {
            return Err(LabError::DivisionDegenerate(i));
        }
        let p = dot(&self.vectors[i], y) / s;
        Ok(p * p)
    }

    /// chi_full(Y)^2, summed from the smallest sigma upward.
    pub fn chi_full_sq(&self, y: &[f64]) -> Result<f64> {
        self.check(y)?;
        let mut acc = Neumaier::default();
        acc.add(1.0);
        for i in (0..self.sigma.len()).rev() {
            acc.add(self.term(i, y)?);
        }
        Ok(acc.value())
    }

    pub fn chi_full(&self, y: &[f64]) -> Result<f64> {
        Ok(self.chi_full_sq(y)?.sqrt())
    }

    pub fn chi_trunc_sq(&self, y: &[f64]) -> Result<f64> {
        self.check(y)?;
        let m = self.sigma.len();
        let mut acc = Neumaier::default();
        for i in (m - self.ell..m).rev() {
            acc.add(self.term(i, y)?);
        }
        Ok(acc.value())
    }

    pub fn chi_trunc(&self, y: &[f64]) -> Result<f64> {
        Ok(self.chi_trunc_sq(y)?.sqrt())
    }

    /// |chi_full^2 / chi_trunc^2 - 1|, infinite when chi_trunc vanishes.
    pub fn truncation_gap(&self, y: &[f64]) -> Result<f64> {
        let full = self.chi_full_sq(y)?;
        let trunc = self.chi_trunc_sq(y)?;
        if trunc == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok((full / trunc - 1.0).abs())
    }
}
