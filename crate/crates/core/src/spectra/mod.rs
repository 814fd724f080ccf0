//! Dense singular value decomposition with relative accuracy at the small end
//! of the spectrum, which is where every quantity in this crate lives.

mod bidiag;
pub mod fast;

use ndarray::Array2;

use crate::error::{LabError, Result};
use bidiag::{bidiagonal_qr, bidiagonalize, RowSet};

/// Rank-deficiency threshold relative to the Frobenius norm.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// All singular values, descending.
    pub sigma: Vec<f64>,
    /// Right singular vectors for the k smallest singular values, smallest first:
    /// `smallest_vectors[j]` pairs with `sigma[sigma.len() - 1 - j]`.
    pub smallest_vectors: Vec<Vec<f64>>,
    pub kernel_vector: Option<Vec<f64>>,
    pub source_dims: (usize, usize),
}

/// The full right singular system.
#[derive(Debug, Clone, PartialEq)]
pub struct RightSvd {
    /// Descending, length min(rows, cols).
    pub sigma: Vec<f64>,
    /// `vectors[i]` is the right singular vector for `sigma[i]`.
    pub vectors: Vec<Vec<f64>>,
    /// Orthonormal basis of the kernel when rows < cols.
    pub null_space: Vec<Vec<f64>>,
    pub dims: (usize, usize),
}

pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Flip `v` so its first non-negligible coordinate is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Copy `a` (or its transpose, if wide) into a tall row-major buffer.
fn tall_copy(a: &Array2<f64>) -> Result<(Vec<f64>, usize, usize, bool)> {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return Err(LabError::Shape("matrix has an empty dimension".into()));
    }
    if let Some(pos) = a.iter().position(|x| !x.is_finite()) {
        return Err(LabError::NonFinite {
            row: pos / cols,
            col: pos % cols,
        });
    }
    Ok(if rows >= cols {
        (a.iter().copied().collect(), rows, cols, false)
    } else {
        (a.t().iter().copied().collect(), cols, rows, true)
    })
}

/// Singular values of a row-major `rows x cols` buffer, descending. Skips
/// the finiteness check; the harness calls this on freshly sampled data.
pub fn singular_values_raw(data: Vec<f64>, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let (data, m, n) = if rows >= cols {
        (data, rows, cols)
    } else {
        let mut t = vec![0.0; data.len()];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = data[i * cols + j];
            }
        }
        (t, cols, rows)
    };
    let mut red = bidiagonalize(data, m, n);
    let (mut d, mut e) = (std::mem::take(&mut red.d), std::mem::take(&mut red.e));
    bidiagonal_qr(&mut d, &mut e, None, None)?;
    Ok(d)
}

pub fn singular_values(a: &Array2<f64>) -> Result<Vec<f64>> {
    let (data, m, n, _) = tall_copy(a)?;
    singular_values_raw(data, m, n)
}

pub fn least_singular_value(a: &Array2<f64>) -> Result<f64> {
    Ok(*singular_values(a)?.last().expect("non-empty"))
}

pub fn right_svd(a: &Array2<f64>) -> Result<RightSvd> {
    let dims = a.dim();
    let (data, m, n, wide) = tall_copy(a)?;
    let mut red = bidiagonalize(data, m, n);
    let (mut d, mut e) = (std::mem::take(&mut red.d), std::mem::take(&mut red.e));
    let rows_of = |buf: &[f64], width: usize, range: std::ops::Range<usize>| -> Vec<Vec<f64>> {
        range
            .map(|i| {
                let mut v = buf[i * width..(i + 1) * width].to_vec();
                canonical_sign(&mut v);
                v
            })
            .collect()
    };
    if !wide {
        let mut vt = red.right_transposed();
        bidiagonal_qr(
            &mut d,
            &mut e,
            Some(RowSet {
                data: &mut vt,
                width: n,
            }),
            None,
        )?;
        Ok(RightSvd {
            vectors: rows_of(&vt, n, 0..n),
            sigma: d,
            null_space: Vec::new(),
            dims,
        })
    } else {
        // right vectors of A are the left vectors of A^T (m x m)
        let mut ut = red.left_transposed();
        bidiagonal_qr(
            &mut d,
            &mut e,
            None,
            Some(RowSet {
                data: &mut ut[..n * m],
                width: m,
            }),
        )?;
        Ok(RightSvd {
            vectors: rows_of(&ut, m, 0..n),
            null_space: rows_of(&ut, m, n..m),
            sigma: d,
            dims,
        })
    }
}

pub fn smallest_singular_pairs(a: &Array2<f64>, k: usize) -> Result<SpectralSummary> {
    let (rows, cols) = a.dim();
    let max = rows.min(cols);
    if k > max {
        return Err(LabError::KOutOfRange { k, max });
    }
    let svd = right_svd(a)?;
    let r = svd.sigma.len();
    Ok(SpectralSummary {
        smallest_vectors: (0..k).map(|j| svd.vectors[r - 1 - j].clone()).collect(),
        kernel_vector: svd.null_space.first().cloned(),
        sigma: svd.sigma,
        source_dims: (rows, cols),
    })
}

/// Check that the smallest singular value of `svd` clears the rank threshold.
pub fn check_full_rank(svd: &RightSvd, fro: f64) -> Result<()> {
    let threshold = RANK_TOL * fro;
    let sigma = svd.sigma.last().copied().unwrap_or(0.0);
    if sigma <= threshold {
        return Err(LabError::DegenerateKernel { sigma, threshold });
    }
    Ok(())
}

/// Unit kernel vector of an `(n-1) x n` matrix.
pub fn kernel_vector(astar: &Array2<f64>) -> Result<Vec<f64>> {
    let (rows, cols) = astar.dim();
    if rows + 1 != cols {
        return Err(LabError::Shape(format!("kernel_vector needs (n-1) x n input, got {rows}x{cols}")));
    }
    let svd = right_svd(astar)?;
    check_full_rank(&svd, frobenius(astar))?;
    Ok(svd.null_space.into_iter().next().expect("one kernel direction"))
}
