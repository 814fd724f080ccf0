//! Householder bidiagonalization and the implicit-shift bidiagonal QR
//! iteration (relative-accuracy variant with Demmel-Kahan zero shifts).
//!
//! Matrices are row-major `Vec<f64>`. Singular vector sets are stored as rows
//! (so U and V are kept transposed) which keeps every rotation contiguous.

use crate::error::{LabError, Result};

const EPS: f64 = f64::EPSILON * 0.5;

/// Result of reducing a tall `m x n` matrix to upper bidiagonal form.
pub(crate) struct Reduction {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    /// The overwritten matrix, holding the Householder vectors.
    a: Vec<f64>,
    tau_l: Vec<f64>,
    tau_r: Vec<f64>,
    m: usize,
    n: usize,
}

/// Dot product with eight independent accumulators. The summation order is
/// fixed by the code, so results do not depend on the vector width chosen by
/// the compiler.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// y <- y + alpha x
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Generate an elementary reflector H = I - tau v v^T with v[0] = 1 that maps
/// (alpha, x) to (beta, 0). On return `x` holds v[1..].
fn householder(alpha: f64, x: &mut [f64]) -> (f64, f64) {
    let ss = dot(x, x);
    // plain sum of squares unless it under- or overflowed
    let xnorm = if ss.is_finite() && ss > 1e-280 {
        ss.sqrt()
    } else {
        x.iter().fold(0.0f64, |acc, &t| acc.hypot(t))
    };
    if xnorm == 0.0 {
        return (0.0, alpha);
    }
    let beta = -alpha.hypot(xnorm).copysign(alpha);
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for t in x.iter_mut() {
        *t *= scale;
    }
    (tau, beta)
}

/// Reduce a tall (`m >= n`) row-major matrix in place.
pub(crate) fn bidiagonalize(a: Vec<f64>, m: usize, n: usize) -> Reduction {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { bidiagonalize_avx2(a, m, n) };
        }
    }
    bidiagonalize_impl(a, m, n)
}

// Same code compiled for wider vectors. No fused multiply-add is enabled, so
// results are bit-identical to the baseline path.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn bidiagonalize_avx2(a: Vec<f64>, m: usize, n: usize) -> Reduction {
    bidiagonalize_impl(a, m, n)
}

#[inline(always)]
fn bidiagonalize_impl(mut a: Vec<f64>, m: usize, n: usize) -> Reduction {
    debug_assert!(m >= n && a.len() == m * n);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut tau_l = vec![0.0; n];
    let mut tau_r = vec![0.0; n.saturating_sub(1)];
    let mut col = vec![0.0; m];
    let mut w = vec![0.0; n];
    let mut vr = vec![0.0; n];

    for k in 0..n {
        // left reflector on column k, rows k..m
        let len = m - k;
        for i in 0..len {
            col[i] = a[(k + i) * n + k];
        }
        let (tau, beta) = householder(col[0], &mut col[1..len]);
        d[k] = beta;
        tau_l[k] = tau;
        a[k * n + k] = beta;
        for i in 1..len {
            a[(k + i) * n + k] = col[i];
        }
        if k + 1 == n {
            break;
        }
        let w = &mut w[k + 1..n];
        if tau != 0.0 {
            w.fill(0.0);
            for i in 0..len {
                let vi = if i == 0 { 1.0 } else { col[i] };
                axpy(vi, &a[(k + i) * n + k + 1..(k + i + 1) * n], w);
            }
            axpy(-tau, w, &mut a[k * n + k + 1..(k + 1) * n]);
        }

        // right reflector on row k, columns k+1..n
        let (head, rest) = a[k * n + k + 1..(k + 1) * n].split_first_mut().unwrap();
        let (tau_rk, beta) = householder(*head, rest);
        *head = beta;
        e[k] = beta;
        tau_r[k] = tau_rk;
        let vr = &mut vr[k + 1..n];
        vr[0] = 1.0;
        vr[1..].copy_from_slice(&a[k * n + k + 2..(k + 1) * n]);

        // finish the left update and apply the right reflector row by row
        for i in 1..len {
            let row = &mut a[(k + i) * n + k + 1..(k + i + 1) * n];
            if tau != 0.0 {
                axpy(-tau * col[i], w, row);
            }
            if tau_rk != 0.0 {
                let s = tau_rk * dot(row, vr);
                axpy(-s, vr, row);
            }
        }
    }
    Reduction {
        d,
        e,
        a,
        tau_l,
        tau_r,
        m,
        n,
    }
}

/// Apply a reflector (tau, v) with v supported on `start..` to the rows of `x`
/// from the left: X <- (I - tau v v^T) X. `x` has `width` columns.
fn reflect_rows(x: &mut [f64], width: usize, start: usize, v: &[f64], tau: f64) {
    if tau == 0.0 {
        return;
    }
    let mut w = vec![0.0; width];
    for (i, vi) in v.iter().enumerate() {
        axpy(*vi, &x[(start + i) * width..(start + i + 1) * width], &mut w);
    }
    for (i, vi) in v.iter().enumerate() {
        axpy(-tau * vi, &w, &mut x[(start + i) * width..(start + i + 1) * width]);
    }
}

impl Reduction {
    /// Q^T as an `m x m` row-major matrix (rows are left basis vectors).
    pub fn left_transposed(&self) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let mut x = identity(m);
        let mut v = Vec::with_capacity(m);
        for k in 0..n {
            v.clear();
            v.push(1.0);
            v.extend((k + 1..m).map(|i| self.a[i * n + k]));
            reflect_rows(&mut x, m, k, &v, self.tau_l[k]);
        }
        x
    }

    /// P^T as an `n x n` row-major matrix.
    pub fn right_transposed(&self) -> Vec<f64> {
        let n = self.n;
        let mut x = identity(n);
        let mut v = Vec::with_capacity(n);
        for k in 0..n.saturating_sub(1) {
            v.clear();
            v.push(1.0);
            v.extend_from_slice(&self.a[k * n + k + 2..(k + 1) * n]);
            reflect_rows(&mut x, n, k + 1, &v, self.tau_r[k]);
        }
        x
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n * n];
    for i in 0..n {
        x[i * n + i] = 1.0;
    }
    x
}

/// A set of row vectors that receives plane rotations.
pub(crate) struct RowSet<'a> {
    pub data: &'a mut [f64],
    pub width: usize,
}

impl RowSet<'_> {
    /// rows (i, i+1) <- (c r_i + s r_{i+1}, c r_{i+1} - s r_i)
    #[inline]
    fn rotate(&mut self, i: usize, c: f64, s: f64) {
        let w = self.width;
        let (top, bottom) = self.data[i * w..(i + 2) * w].split_at_mut(w);
        for (x, y) in top.iter_mut().zip(bottom.iter_mut()) {
            let t = *y;
            *y = c * t - s * *x;
            *x = s * t + c * *x;
        }
    }

    fn negate(&mut self, i: usize) {
        for x in &mut self.data[i * self.width..(i + 1) * self.width] {
            *x = -*x;
        }
    }

    fn swap(&mut self, i: usize, j: usize) {
        let w = self.width;
        for k in 0..w {
            self.data.swap(i * w + k, j * w + k);
        }
    }
}

fn rot(vt: &mut Option<RowSet>, i: usize, c: f64, s: f64) {
    if let Some(r) = vt {
        r.rotate(i, c, s);
    }
}

/// Plane rotation with r carrying the sign of f: [c s; -s c] (f, g)^T = (r, 0)^T.
#[inline]
fn givens(f: f64, g: f64) -> (f64, f64, f64) {
    if g == 0.0 {
        (1.0, 0.0, f)
    } else if f == 0.0 {
        (0.0, 1.0, g)
    } else {
        let (fa, ga) = (f.abs(), g.abs());
        // hypot is slow; only needed when squaring could leave the normal range
        let d = if fa > 1e-150 && fa < 1e150 && ga > 1e-150 && ga < 1e150 {
            (f * f + g * g).sqrt()
        } else {
            f.hypot(g)
        };
        let r = d.copysign(f);
        (fa / d, g / r, r)
    }
}

/// Singular values (smaller, larger) of the 2x2 upper triangular [[f, g], [0, h]].
fn sv2x2(f: f64, g: f64, h: f64) -> (f64, f64) {
    let (fa, ga, ha) = (f.abs(), g.abs(), h.abs());
    let fhmn = fa.min(ha);
    let fhmx = fa.max(ha);
    if fhmn == 0.0 {
        let smax = if fhmx == 0.0 {
            ga
        } else {
            let (lo, hi) = (fhmx.min(ga), fhmx.max(ga));
            hi * (1.0 + (lo / hi).powi(2)).sqrt()
        };
        (0.0, smax)
    } else if ga < fhmx {
        let as_ = 1.0 + fhmn / fhmx;
        let at = (fhmx - fhmn) / fhmx;
        let au = (ga / fhmx).powi(2);
        let c = 2.0 / ((as_ * as_ + au).sqrt() + (at * at + au).sqrt());
        (fhmn * c, fhmx / c)
    } else {
        let au = fhmx / ga;
        if au == 0.0 {
            ((fhmn * fhmx) / ga, ga)
        } else {
            let as_ = 1.0 + fhmn / fhmx;
            let at = (fhmx - fhmn) / fhmx;
            let c = 1.0 / ((1.0 + (as_ * au).powi(2)).sqrt() + (1.0 + (at * au).powi(2)).sqrt());
            (2.0 * (fhmn * c) * au, ga / (c + c))
        }
    }
}

/// Diagonalize the upper bidiagonal (d, e). Right rotations go to `vt`, left
/// rotations to `ut`. On return `d` is sorted descending and nonnegative and
/// the first `d.len()` rows of each row set are permuted to match.
pub(crate) fn bidiagonal_qr(
    d: &mut [f64],
    e: &mut [f64],
    mut vt: Option<RowSet>,
    mut ut: Option<RowSet>,
) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    if n > 1 {
        qr_iterate(d, e, &mut vt, &mut ut)?;
    }
    for i in 0..n {
        if d[i] < 0.0 {
            d[i] = -d[i];
            if let Some(r) = vt.as_mut() {
                r.negate(i);
            }
        }
    }
    // selection sort keeps the row swaps to at most n
    for i in 0..n {
        let mut best = i;
        for j in i + 1..n {
            if d[j] > d[best] {
                best = j;
            }
        }
        if best != i {
            d.swap(i, best);
            if let Some(r) = vt.as_mut() {
                r.swap(i, best);
            }
            if let Some(r) = ut.as_mut() {
                r.swap(i, best);
            }
        }
    }
    Ok(())
}

fn qr_iterate(d: &mut [f64], e: &mut [f64], vt: &mut Option<RowSet>, ut: &mut Option<RowSet>) -> Result<()> {
    let n = d.len();
    let tol = EPS.powf(-0.125).clamp(10.0, 100.0) * EPS;
    let unfl = f64::MIN_POSITIVE;

    let mut sminoa = d[0].abs();
    if sminoa != 0.0 {
        let mut mu = sminoa;
        for i in 1..n {
            mu = d[i].abs() * (mu / (mu + e[i - 1].abs()));
            sminoa = sminoa.min(mu);
            if sminoa == 0.0 {
                break;
            }
        }
    }
    sminoa /= (n as f64).sqrt();
    let thresh = (tol * sminoa).max(6.0 * (n as f64) * (n as f64) * unfl);

    let max_iter = 6 * n * n;
    let mut iter = 0usize;
    let mut m = n - 1;
    let (mut oldll, mut oldm): (isize, isize) = (-1, -1);
    let mut top_down = true;

    'outer: while m > 0 {
        if iter > max_iter {
            return Err(LabError::NoConvergence);
        }
        // locate the unreduced block ll..=m
        let mut smax = d[m].abs();
        let mut split = None;
        for l in (0..m).rev() {
            let (abss, abse) = (d[l].abs(), e[l].abs());
            if abse <= thresh {
                split = Some(l);
                break;
            }
            smax = smax.max(abss).max(abse);
        }
        let ll = match split {
            None => 0,
            Some(l) => {
                e[l] = 0.0;
                if l == m - 1 {
                    m -= 1;
                    continue;
                }
                l + 1
            }
        };

        if ll as isize > oldm || (m as isize) < oldll {
            top_down = d[ll].abs() >= d[m].abs();
        }

        // convergence tests
        let mut sminl;
        if top_down {
            if e[m - 1].abs() <= tol * d[m].abs() {
                e[m - 1] = 0.0;
                continue;
            }
            let mut mu = d[ll].abs();
            sminl = mu;
            for l in ll..m {
                if e[l].abs() <= tol * mu {
                    e[l] = 0.0;
                    continue 'outer;
                }
                mu = d[l + 1].abs() * (mu / (mu + e[l].abs()));
                sminl = sminl.min(mu);
            }
        } else {
            if e[ll].abs() <= tol * d[ll].abs() {
                e[ll] = 0.0;
                continue;
            }
            let mut mu = d[m].abs();
            sminl = mu;
            for l in (ll..m).rev() {
                if e[l].abs() <= tol * mu {
                    e[l] = 0.0;
                    continue 'outer;
                }
                mu = d[l].abs() * (mu / (mu + e[l].abs()));
                sminl = sminl.min(mu);
            }
        }
        oldll = ll as isize;
        oldm = m as isize;

        // shift, unless it would spoil relative accuracy
        let shift = if (n as f64) * tol * (sminl / smax) <= EPS.max(0.01 * tol) {
            0.0
        } else {
            let (sll, s) = if top_down {
                (d[ll].abs(), sv2x2(d[m - 1], e[m - 1], d[m]).0)
            } else {
                (d[m].abs(), sv2x2(d[ll], e[ll], d[ll + 1]).0)
            };
            if sll > 0.0 && (s / sll).powi(2) < EPS {
                0.0
            } else {
                s
            }
        };
        iter += m - ll;

        match (shift == 0.0, top_down) {
            (true, true) => {
                let (mut cs, mut oldcs, mut oldsn) = (1.0, 1.0, 0.0);
                for i in ll..m {
                    let (c, s, r) = givens(d[i] * cs, e[i]);
                    cs = c;
                    if i > ll {
                        e[i - 1] = oldsn * r;
                    }
                    let (oc, os, di) = givens(oldcs * r, d[i + 1] * s);
                    oldcs = oc;
                    oldsn = os;
                    d[i] = di;
                    rot(vt, i, c, s);
                    rot(ut, i, oc, os);
                }
                let h = d[m] * cs;
                d[m] = h * oldcs;
                e[m - 1] = h * oldsn;
                if e[m - 1].abs() <= thresh {
                    e[m - 1] = 0.0;
                }
            }
            (true, false) => {
                let (mut cs, mut oldcs, mut oldsn) = (1.0, 1.0, 0.0);
                for i in (ll + 1..=m).rev() {
                    let (c, s, r) = givens(d[i] * cs, e[i - 1]);
                    cs = c;
                    if i < m {
                        e[i] = oldsn * r;
                    }
                    let (oc, os, di) = givens(oldcs * r, d[i - 1] * s);
                    oldcs = oc;
                    oldsn = os;
                    d[i] = di;
                    rot(ut, i - 1, c, -s);
                    rot(vt, i - 1, oc, -os);
                }
                let h = d[ll] * cs;
                d[ll] = h * oldcs;
                e[ll] = h * oldsn;
                if e[ll].abs() <= thresh {
                    e[ll] = 0.0;
                }
            }
            (false, true) => {
                let mut f = (d[ll].abs() - shift) * (1.0f64.copysign(d[ll]) + shift / d[ll]);
                let mut g = e[ll];
                for i in ll..m {
                    let (cr, sr, r) = givens(f, g);
                    if i > ll {
                        e[i - 1] = r;
                    }
                    f = cr * d[i] + sr * e[i];
                    e[i] = cr * e[i] - sr * d[i];
                    g = sr * d[i + 1];
                    d[i + 1] *= cr;
                    let (cl, sl, r) = givens(f, g);
                    d[i] = r;
                    f = cl * e[i] + sl * d[i + 1];
                    d[i + 1] = cl * d[i + 1] - sl * e[i];
                    if i < m - 1 {
                        g = sl * e[i + 1];
                        e[i + 1] *= cl;
                    }
                    rot(vt, i, cr, sr);
                    rot(ut, i, cl, sl);
                }
                e[m - 1] = f;
                if e[m - 1].abs() <= thresh {
                    e[m - 1] = 0.0;
                }
            }
            (false, false) => {
                let mut f = (d[m].abs() - shift) * (1.0f64.copysign(d[m]) + shift / d[m]);
                let mut g = e[m - 1];
                for i in (ll + 1..=m).rev() {
                    let (cr, sr, r) = givens(f, g);
                    if i < m {
                        e[i] = r;
                    }
                    f = cr * d[i] + sr * e[i - 1];
                    e[i - 1] = cr * e[i - 1] - sr * d[i];
                    g = sr * d[i - 1];
                    d[i - 1] *= cr;
                    let (cl, sl, r) = givens(f, g);
                    d[i] = r;
                    f = cl * e[i - 1] + sl * d[i - 1];
                    d[i - 1] = cl * d[i - 1] - sl * e[i - 1];
                    if i > ll + 1 {
                        g = sl * e[i - 2];
                        e[i - 2] *= cl;
                    }
                    rot(ut, i - 1, cr, -sr);
                    rot(vt, i - 1, cl, -sl);
                }
                e[ll] = f;
                if e[ll].abs() <= thresh {
                    e[ll] = 0.0;
                }
            }
        }
    }
    Ok(())
}
