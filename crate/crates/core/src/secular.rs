//! Rank-one update of a singular spectrum.
//!
//! Appending a row Y to an (n-1) x n matrix A* changes A^T A by Y Y^T. In the
//! right singular basis of A* this is diag(sigma_i^2, 0) + z z^T with
//! z = (<u_i, Y>, <u, Y>), so the squared singular values of the stacked matrix
//! are the roots in lambda of 1 + sum_j z_j^2 / (d_j - lambda) = 0.

use ndarray::{s, Array2};

use crate::corrector::CorrectionContext;
use crate::error::{LabError, Result};
use crate::numeric::{norm2, Neumaier};
use crate::spectra;

/// |z_j| at or below this multiple of |z| is treated as zero.
pub const DEFLATION_TOL: f64 = 1e-13;
const BISECTION_STEPS: usize = 40;
const NEWTON_STEPS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SecularProblem {
    /// Ascending.
    pub sigma_star: Vec<f64>,
    /// `inner[i]` is the projection of Y on the singular direction of `sigma_star[i]`.
    pub inner: Vec<f64>,
    /// Projection of Y on the kernel direction.
    pub kernel_inner: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootStatus {
    Interior,
    /// The kernel projection vanished; the least singular value is 0.
    Deflated,
    /// A deflated pole lies below the first secular root and is the answer.
    BoundaryDeflated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeastRoot {
    pub value: f64,
    pub status: RootStatus,
}

impl SecularProblem {
    pub fn new(sigma_star: Vec<f64>, inner: Vec<f64>, kernel_inner: f64) -> Result<Self> {
        let p = SecularProblem {
            sigma_star,
            inner,
            kernel_inner,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_star.len() != self.inner.len() {
            return Err(LabError::Shape(format!(
                "sigma_star has {} entries but inner has {}",
                self.sigma_star.len(),
                self.inner.len()
            )));
        }
        if self.sigma_star.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(LabError::InvalidArgument("sigma_star must be finite and nonnegative".into()));
        }
        if self.sigma_star.windows(2).any(|w| w[0] > w[1]) {
            return Err(LabError::InvalidArgument("sigma_star must be ascending".into()));
        }
        if self.inner.iter().any(|x| !x.is_finite()) || !self.kernel_inner.is_finite() {
            return Err(LabError::InvalidArgument("inner products must be finite".into()));
        }
        Ok(())
    }

    /// Build the problem for the stack of `astar` ((n-1) x n) and the row `y`.
    pub fn from_rows(astar: &Array2<f64>, y: &[f64]) -> Result<Self> {
        let (rows, cols) = astar.dim();
        if rows + 1 != cols || y.len() != cols {
            return Err(LabError::Shape(format!(
                "need (n-1) x n matrix and length-n row, got {rows}x{cols} and {}",
                y.len()
            )));
        }
        let svd = spectra::right_svd(astar)?;
        let proj = |v: &[f64]| v.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let mut sigma_star = svd.sigma.clone();
        let mut inner: Vec<f64> = svd.vectors.iter().map(|v| proj(v)).collect();
        sigma_star.reverse();
        inner.reverse();
        Self::new(sigma_star, inner, proj(&svd.null_space[0]))
    }

    fn norm_z(&self) -> f64 {
        norm2(&self.inner).hypot(self.kernel_inner)
    }
}

/// Distinct poles with positive weights plus the values fixed by deflation.
struct Reduced {
    poles: Vec<f64>,
    weights: Vec<f64>,
    deflated: Vec<f64>,
}

fn reduce(p: &SecularProblem) -> Reduced {
    let tol = DEFLATION_TOL * p.norm_z();
    let mut live: Vec<(f64, f64)> = Vec::new();
    let mut deflated = Vec::new();
    let entries = std::iter::once((0.0, p.kernel_inner))
        .chain(p.sigma_star.iter().zip(&p.inner).map(|(s, z)| (s * s, *z)));
    for (d, z) in entries {
        if z.abs() <= tol {
            deflated.push(d);
        } else {
            live.push((d, z * z));
        }
    }
    live.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dmax = live.last().map(|x| x.0).unwrap_or(0.0);
    let merge_tol = 8.0 * f64::EPSILON * dmax;
    let mut poles: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (d, w) in live {
        match poles.last() {
            // a tie: one copy stays a pole, the other becomes an exact eigenvalue
            Some(&last) if d - last <= merge_tol => {
                *weights.last_mut().unwrap() += w;
                deflated.push(last);
            }
            _ => {
                poles.push(d);
                weights.push(w);
            }
        }
    }
    Reduced {
        poles,
        weights,
        deflated,
    }
}

/// Root of the secular function in the interval starting at pole `i`
/// (the last interval is bounded by the total weight).
fn interval_root(poles: &[f64], weights: &[f64], i: usize, hint: Option<f64>) -> f64 {
    let k = poles.len();
    let total: f64 = weights.iter().sum();
    // choose the origin at the nearer pole
    let (origin, sign, mut hi) = if i + 1 == k {
        (i, 1.0, total)
    } else {
        let gap = poles[i + 1] - poles[i];
        let mid = poles[i] + 0.5 * gap;
        let f_mid = secular_value(poles, weights, mid);
        if f_mid >= 0.0 {
            (i, 1.0, 0.5 * gap)
        } else {
            (i + 1, -1.0, 0.5 * gap)
        }
    };
    let o = poles[origin];
    let w_o = weights[origin];
    let delta: Vec<f64> = poles.iter().map(|p| p - o).collect();

    // G(tau) = R(tau) - w_o / tau is increasing; R is the rest, made increasing by `sign`.
    let rest = |tau: f64| -> (f64, f64) {
        let mut s = Neumaier::default();
        let mut ds = Neumaier::default();
        for j in 0..k {
            if j == origin {
                continue;
            }
            let den = delta[j] - sign * tau;
            s.add(weights[j] / den);
            ds.add(weights[j] / (den * den));
        }
        (sign * (1.0 + s.value()), ds.value())
    };
    let g = |tau: f64| rest(tau).0 - w_o / tau;

    let r_hi = rest(hi).0;
    let mut lo = if r_hi > 0.0 { (w_o / r_hi).min(hi) } else { hi * 1e-300 };
    if let Some(h) = hint {
        let t = (h - o) * sign;
        if t > lo && t < hi {
            if g(t) < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = if hi > 2.0 * lo && lo > 0.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut tau = 0.5 * (lo + hi);
    for _ in 0..NEWTON_STEPS {
        let (r, dr) = rest(tau);
        let gv = r - w_o / tau;
        let dg = dr + w_o / (tau * tau);
        if gv == 0.0 || dg <= 0.0 {
            break;
        }
        let next = tau - gv / dg;
        if !(next > lo && next < hi) {
            break;
        }
        if gv < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        if (next - tau).abs() <= 2.0 * f64::EPSILON * tau {
            tau = next;
            break;
        }
        tau = next;
    }
    o + sign * tau
}

fn secular_value(poles: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let mut s = Neumaier::default();
    s.add(1.0);
    for (p, w) in poles.iter().zip(weights) {
        s.add(w / (p - lambda));
    }
    s.value()
}

/// All n singular values of the stacked matrix, descending.
pub fn secular_spectrum(p: &SecularProblem) -> Result<Vec<f64>> {
    p.validate()?;
    let r = reduce(p);
    let mut lambdas = r.deflated;
    for i in 0..r.poles.len() {
        lambdas.push(interval_root(&r.poles, &r.weights, i, None));
    }
    let mut x: Vec<f64> = lambdas.into_iter().map(|l| l.max(0.0).sqrt()).collect();
    x.sort_by(|a, b| b.total_cmp(a));
    Ok(x)
}

/// The least singular value of the stacked matrix from the first secular root.
/// `eps_hint` is an optional guess for the root (0 to ignore).
pub fn secular_least(p: &SecularProblem, eps_hint: f64) -> Result<LeastRoot> {
    p.validate()?;
    let r = reduce(p);
    if r.deflated.contains(&0.0) || r.poles.first().is_none_or(|&d| d > 0.0) {
        // the kernel direction did not survive deflation
        if p.kernel_inner.abs() <= DEFLATION_TOL * p.norm_z() {
            return Ok(LeastRoot {
                value: 0.0,
                status: RootStatus::Deflated,
            });
        }
    }
    if p.sigma_star.first().is_some_and(|&s| s <= 0.0) {
        return Err(LabError::InvalidArgument(
            "secular_least needs sigma_{n-1}(A*) > 0".into(),
        ));
    }
    let hint = (eps_hint > 0.0).then_some(eps_hint * eps_hint);
    let root = interval_root(&r.poles, &r.weights, 0, hint).max(0.0).sqrt();
    let boundary = r
        .deflated
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .sqrt();
    Ok(if boundary < root {
        LeastRoot {
            value: boundary,
            status: RootStatus::BoundaryDeflated,
        }
    } else {
        LeastRoot {
            value: root,
            status: RootStatus::Interior,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicationReport {
    /// sigma_{n-1}(A*) >= eps^{3/4} n^{-1/2}
    pub premise1: bool,
    /// sigma_n(A) <= eps n^{-1/2}
    pub antecedent: bool,
    pub forward_ok: bool,
    pub converse_ok: bool,
    pub sigma_n: f64,
    pub sigma_star_min: f64,
    pub kernel_inner: f64,
    pub chi_full: f64,
}

impl ImplicationReport {
    pub fn both_ok(&self) -> bool {
        self.forward_ok && self.converse_ok
    }
}

/// Check both directions of the update implications on one square matrix:
/// the last row plays Y and the rest A*. A degenerate kernel in A* is
/// returned as `LabError::DegenerateKernel`, the skipped-trial marker.
pub fn verify_update_implications(a: &Array2<f64>, eps: f64) -> Result<ImplicationReport> {
    let (n, cols) = a.dim();
    if n != cols || n < 2 {
        return Err(LabError::Shape(format!("need a square matrix with n >= 2, got {n}x{cols}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::InvalidArgument(format!("eps = {eps} outside (0, 1)")));
    }
    let astar = a.slice(s![..n - 1, ..]).to_owned();
    let y: Vec<f64> = a.row(n - 1).to_vec();
    let ctx = CorrectionContext::from_matrix(&astar, None, None)?;
    let u = ctx.kernel.as_ref().expect("wide input has a kernel");
    let kernel_inner: f64 = u.iter().zip(&y).map(|(a, b)| a * b).sum();
    let chi_full = ctx.chi_full(&y)?;
    let sigma_n = *spectra::singular_values(a)?.last().unwrap();
    let sigma_star_min = *ctx.sigma.last().unwrap();

    let scale = eps / (n as f64).sqrt();
    let premise1 = sigma_star_min >= eps.powf(0.75) / (n as f64).sqrt();
    let antecedent = sigma_n <= scale;
    let forward_ok = !(premise1 && antecedent) || kernel_inner.abs() <= (1.0 + eps.powf(0.25)) * scale * chi_full;
    let converse_ok = antecedent || kernel_inner.abs() > scale * chi_full;
    Ok(ImplicationReport {
        premise1,
        antecedent,
        forward_ok,
        converse_ok,
        sigma_n,
        sigma_star_min,
        kernel_inner,
        chi_full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn golden_example() {
        let p = SecularProblem::new(vec![1.0], vec![1.0], 1.0).unwrap();
        let s = secular_spectrum(&p).unwrap();
        assert_relative_eq!(s[0], ((3.0 + 5f64.sqrt()) / 2.0).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(s[1], ((3.0 - 5f64.sqrt()) / 2.0).sqrt(), max_relative = 1e-14);
        let least = secular_least(&p, 0.0).unwrap();
        assert_eq!(least.status, RootStatus::Interior);
        assert!((least.value - 0.618_033_988_7).abs() < 1e-10);
    }

    #[test]
    fn deflated_inner_keeps_sigma() {
        let p = SecularProblem::new(vec![1.0], vec![0.0], 2.0).unwrap();
        assert_eq!(secular_spectrum(&p).unwrap(), vec![2.0, 1.0]);
        let least = secular_least(&p, 0.0).unwrap();
        assert_eq!(least.status, RootStatus::BoundaryDeflated);
        assert_eq!(least.value, 1.0);
    }

    #[test]
    fn zero_row_appends_zero() {
        let p = SecularProblem::new(vec![1.0, 1.0], vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!(secular_spectrum(&p).unwrap(), vec![1.0, 1.0, 0.0]);
        let least = secular_least(&p, 0.0).unwrap();
        assert_eq!(least, LeastRoot { value: 0.0, status: RootStatus::Deflated });
    }

    #[test]
    fn kernel_zero_with_live_rest_is_deflated() {
        let p = SecularProblem::new(vec![0.5, 2.0], vec![1.0, 1.0], 0.0).unwrap();
        assert_eq!(secular_least(&p, 0.3).unwrap().status, RootStatus::Deflated);
        let s = secular_spectrum(&p).unwrap();
        assert_eq!(*s.last().unwrap(), 0.0);
    }

    #[test]
    fn tied_poles_are_merged() {
        let p = SecularProblem::new(vec![1.0, 1.0], vec![0.6, 0.8], 1.0).unwrap();
        let s = secular_spectrum(&p).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.contains(&1.0));
        // stacked matrix oracle: A* = [[1,0,0],[0,1,0]] with Y = (0.6, 0.8, 1)
        let a = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.8, 1.0]];
        let want = spectra::singular_values(&a).unwrap();
        for (x, y) in s.iter().zip(&want) {
            assert_relative_eq!(*x, *y, max_relative = 1e-12);
        }
    }

    #[test]
    fn from_rows_matches_stacked_svd() {
        let astar = array![[1.0, 0.0], ];
        let p = SecularProblem::from_rows(&astar, &[1.0, 1.0]).unwrap();
        assert_eq!(p.sigma_star, vec![1.0]);
        assert_relative_eq!(p.inner[0].abs(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(p.kernel_inner.abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_problem_rejected() {
        assert!(SecularProblem::new(vec![1.0, 2.0], vec![1.0], 0.0).is_err());
        assert!(SecularProblem::new(vec![2.0, 1.0], vec![1.0, 1.0], 0.0).is_err());
        assert!(SecularProblem::new(vec![-1.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn implications_identity() {
        let r = verify_update_implications(&Array2::eye(5), 0.5).unwrap();
        assert!(!r.antecedent);
        assert!(r.both_ok());
    }

    #[test]
    fn implications_golden() {
        let a = array![[1.0, 0.0], [1.0, 1.0]];
        let eps = 0.7 * 2f64.sqrt();
        let r = verify_update_implications(&a, eps).unwrap();
        assert!(r.premise1 && r.antecedent);
        assert!(r.forward_ok && r.converse_ok);
    }
}
