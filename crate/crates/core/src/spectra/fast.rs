//! Least singular value of a square matrix without a full SVD.
//!
//! LU with partial pivoting, then Lanczos on (A^T A)^{-1} driven by triangular
//! solves. The top Ritz value is accepted once its residual certifies relative
//! accuracy; otherwise, or when A is close to singular, we fall back to the
//! bidiagonal SVD. This is the hot path of the tail experiments.

use super::bidiag::{axpy, dot};
use crate::error::Result;

const MAX_STEPS: usize = 64;
/// Certified relative accuracy demanded of the Ritz value.
const RESIDUAL_TOL: f64 = 1e-13;
/// Below this multiple of the Frobenius norm we hand over to the SVD.
const NEAR_SINGULAR: f64 = 1e-7;

/// Reusable buffers for one worker.
#[derive(Default)]
pub struct Workspace {
    lu: Vec<f64>,
    perm: Vec<usize>,
    basis: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    svd: Vec<f64>,
}

/// Which route produced the value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Lanczos,
    Svd,
}

/// Smallest singular value of the row-major `n x n` matrix in `a`.
pub fn sigma_min_square(a: &[f64], n: usize, ws: &mut Workspace) -> Result<(f64, Route)> {
    assert_eq!(a.len(), n * n);
    let fro = dot(a, a).sqrt();
    if n < 16 || fro == 0.0 {
        return svd_route(a, n, ws);
    }
    ws.lu.clear();
    ws.lu.extend_from_slice(a);
    if !lu_factor(&mut ws.lu, n, &mut ws.perm, NEAR_SINGULAR * fro) {
        return svd_route(a, n, ws);
    }
    match lanczos(ws, n) {
        Some(mu) => {
            let sigma = 1.0 / mu.sqrt();
            if sigma <= NEAR_SINGULAR * fro {
                svd_route(a, n, ws)
            } else {
                Ok((sigma, Route::Lanczos))
            }
        }
        None => svd_route(a, n, ws),
    }
}

fn svd_route(a: &[f64], n: usize, ws: &mut Workspace) -> Result<(f64, Route)> {
    ws.svd.clear();
    ws.svd.extend_from_slice(a);
    let s = super::singular_values_raw(std::mem::take(&mut ws.svd), n, n)?;
    Ok((s[n - 1], Route::Svd))
}

/// In-place PA = LU. Returns false if a pivot falls below `tiny`.
fn lu_factor(a: &mut [f64], n: usize, perm: &mut Vec<usize>, tiny: f64) -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { lu_factor_avx2(a, n, perm, tiny) };
        }
    }
    lu_factor_impl(a, n, perm, tiny)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn lu_factor_avx2(a: &mut [f64], n: usize, perm: &mut Vec<usize>, tiny: f64) -> bool {
    lu_factor_impl(a, n, perm, tiny)
}

#[inline(always)]
fn lu_factor_impl(a: &mut [f64], n: usize, perm: &mut Vec<usize>, tiny: f64) -> bool {
    perm.clear();
    perm.extend(0..n);
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].abs();
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= tiny {
            return false;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let (top, rest) = a.split_at_mut((k + 1) * n);
        let pivot_row = &top[k * n + k + 1..(k + 1) * n];
        let inv = 1.0 / top[k * n + k];
        for row in rest.chunks_exact_mut(n) {
            let l = row[k] * inv;
            row[k] = l;
            if l != 0.0 {
                axpy(-l, pivot_row, &mut row[k + 1..]);
            }
        }
    }
    true
}

/// x <- A^{-1} x using the factors (x is permuted-input ordered).
fn solve(lu: &[f64], perm: &[usize], n: usize, b: &[f64], x: &mut [f64]) {
    for i in 0..n {
        x[i] = b[perm[i]];
    }
    for i in 1..n {
        x[i] -= dot(&lu[i * n..i * n + i], &x[..i]);
    }
    for i in (0..n).rev() {
        let s = dot(&lu[i * n + i + 1..(i + 1) * n], &x[i + 1..]);
        x[i] = (x[i] - s) / lu[i * n + i];
    }
}

/// y <- A^{-T} c. `c` is consumed as scratch.
fn solve_transposed(lu: &[f64], perm: &[usize], n: usize, c: &mut [f64], y: &mut [f64]) {
    // U^T z = c
    for i in 0..n {
        let (head, tail) = c.split_at_mut(i + 1);
        let zi = head[i] / lu[i * n + i];
        head[i] = zi;
        axpy(-zi, &lu[i * n + i + 1..(i + 1) * n], tail);
    }
    // L^T w = z
    for i in (1..n).rev() {
        let (head, tail) = c.split_at_mut(i);
        axpy(-tail[0], &lu[i * n..i * n + i], head);
    }
    for i in 0..n {
        y[perm[i]] = c[i];
    }
}

/// Largest eigenvalue of (A^T A)^{-1}, or None without a certificate.
fn lanczos(ws: &mut Workspace, n: usize) -> Option<f64> {
    let Workspace {
        lu,
        perm,
        basis,
        alpha,
        beta,
        x,
        y,
        ..
    } = ws;
    basis.clear();
    basis.resize((MAX_STEPS + 1) * n, 0.0);
    alpha.clear();
    beta.clear();
    x.resize(n, 0.0);
    y.resize(n, 0.0);

    // fixed, non-special start vector
    let q0 = &mut basis[..n];
    for (i, q) in q0.iter_mut().enumerate() {
        *q = 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract();
    }
    let nrm = dot(q0, q0).sqrt();
    q0.iter_mut().for_each(|q| *q /= nrm);

    for j in 0..MAX_STEPS {
        // w = A^{-1} A^{-T} q_j
        x.copy_from_slice(&basis[j * n..(j + 1) * n]);
        solve_transposed(lu, perm, n, x, y);
        solve(lu, perm, n, y, x);
        let (done, rest) = basis.split_at_mut((j + 1) * n);
        let qj = &done[j * n..];
        let a = dot(qj, x);
        alpha.push(a);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for i in 0..=j {
                let qi = &done[i * n..(i + 1) * n];
                let c = dot(qi, x);
                axpy(-c, qi, x);
            }
        }
        let b = dot(x, x).sqrt();
        let theta = top_eigenvalue(alpha, beta);
        if !theta.is_finite() || theta <= 0.0 {
            return None;
        }
        let resid = b * last_component(alpha, beta, theta);
        if resid <= RESIDUAL_TOL * theta || b <= 1e-300 {
            return Some(theta);
        }
        beta.push(b);
        let next = &mut rest[..n];
        for (q, w) in next.iter_mut().zip(x.iter()) {
            *q = w / b;
        }
    }
    None
}

/// Number of eigenvalues of the symmetric tridiagonal (alpha, beta) below x.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = alpha[0] - x;
    for i in 0..alpha.len() {
        if i > 0 {
            q = alpha[i] - x - beta[i - 1] * beta[i - 1] / q;
        }
        if q == 0.0 {
            q = -f64::MIN_POSITIVE.sqrt();
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn top_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    if k == 1 {
        return alpha[0];
    }
    // Gershgorin bracket
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < k { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            break;
        }
    }
    hi
}

/// |last component| of the unit eigenvector of the tridiagonal for the top
/// eigenvalue `theta`, by two steps of shifted inverse iteration.
fn last_component(alpha: &[f64], beta: &[f64], theta: f64) -> f64 {
    let k = alpha.len();
    if k == 1 {
        return 1.0;
    }
    // theta + tau I - T is positive definite, so elimination without pivoting is stable
    let shift = theta + theta.abs() * 1e-10 + f64::MIN_POSITIVE;
    let mut s = vec![1.0; k];
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for _ in 0..2 {
        diag[0] = shift - alpha[0];
        rhs[0] = s[0];
        for i in 1..k {
            let l = -beta[i - 1] / diag[i - 1];
            diag[i] = shift - alpha[i] + l * beta[i - 1];
            rhs[i] = s[i] - l * rhs[i - 1];
        }
        s[k - 1] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            s[i] = (rhs[i] + beta[i] * s[i + 1]) / diag[i];
        }
        let nrm = dot(&s, &s).sqrt();
        s.iter_mut().for_each(|v| *v /= nrm);
    }
    s[k - 1].abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_matrix_trial, EntryDistribution};

    #[test]
    fn matches_svd_on_random_matrices() {
        let mut ws = Workspace::default();
        for (d, n) in [
            (EntryDistribution::gaussian(), 40),
            (EntryDistribution::rademacher(), 64),
            (EntryDistribution::uniform(), 33),
        ] {
            for t in 0..20 {
                let m = sample_matrix_trial(&d, n, n, 3, t).unwrap();
                let a: Vec<f64> = m.entries.iter().copied().collect();
                let (s, _) = sigma_min_square(&a, n, &mut ws).unwrap();
                let want = *crate::spectra::singular_values(&m.entries).unwrap().last().unwrap();
                assert!((s - want).abs() <= 1e-10 * want, "{s} vs {want}");
            }
        }
    }

    #[test]
    fn singular_input_falls_back() {
        let n = 20;
        let mut a = vec![1.0; n * n];
        for i in 0..n {
            a[i * n + i] = 2.0;
        }
        // duplicate a row
        let (r0, r1) = a.split_at_mut(n);
        r1[..n].copy_from_slice(r0);
        let (s, route) = sigma_min_square(&a, n, &mut Workspace::default()).unwrap();
        assert_eq!(route, Route::Svd);
        assert!(s < 1e-12);
    }

    #[test]
    fn tridiagonal_helpers() {
        let alpha = [2.0, 2.0, 2.0];
        let beta = [-1.0, -1.0];
        let top = top_eigenvalue(&alpha, &beta);
        assert!((top - (2.0 + 2f64.sqrt())).abs() < 1e-13);
        assert!((last_component(&alpha, &beta, top) - 0.5).abs() < 1e-8);
    }
}
