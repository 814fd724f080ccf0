//! Entry laws and seeded matrix sampling.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{LabError, Result};
use crate::rng::{role, substream};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const LAW_TOL: f64 = 1e-12;
/// Largest matrix we are willing to allocate, in entries (2 GiB of f64).
pub const ENTRY_BUDGET: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistSpec {
    Rademacher,
    Gaussian,
    Uniform,
    Discrete { support: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistKind {
    Rademacher,
    StandardGaussian,
    /// Uniform on [-sqrt 3, sqrt 3].
    UniformSymmetric,
    DiscreteSymmetric { support: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryDistribution {
    pub kind: DistKind,
    pub mean: f64,
    pub variance: f64,
    pub psi2_estimate: f64,
    cumulative: Vec<f64>,
}

pub const DEFAULT_P_MAX: u32 = 16;

impl EntryDistribution {
    fn finish(kind: DistKind, cumulative: Vec<f64>) -> Self {
        let mut d = EntryDistribution {
            kind,
            mean: 0.0,
            variance: 1.0,
            psi2_estimate: 0.0,
            cumulative,
        };
        d.psi2_estimate = psi2_estimate(&d, DEFAULT_P_MAX);
        d
    }

    pub fn rademacher() -> Self {
        Self::finish(DistKind::Rademacher, Vec::new())
    }

    pub fn gaussian() -> Self {
        Self::finish(DistKind::StandardGaussian, Vec::new())
    }

    pub fn uniform() -> Self {
        Self::finish(DistKind::UniformSymmetric, Vec::new())
    }

    /// A symmetric discrete law. Mean, variance and symmetry are checked in
    /// closed form; the law must already be normalized to variance 1.
    pub fn discrete(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let bad = |m: String| Err(LabError::InvalidDistribution(m));
        if support.is_empty() || support.len() != probs.len() {
            return bad("support and probs must be non-empty and of equal length".into());
        }
        if support.iter().chain(&probs).any(|x| !x.is_finite()) {
            return bad("non-finite support value or probability".into());
        }
        if probs.iter().any(|&p| p < 0.0) {
            return bad("negative probability".into());
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > LAW_TOL {
            return bad(format!("probabilities sum to {total}, not 1"));
        }
        let mass_at = |target: f64| -> f64 {
            support
                .iter()
                .zip(&probs)
                .filter(|(y, _)| (**y - target).abs() <= LAW_TOL * (1.0 + target.abs()))
                .map(|(_, q)| q)
                .sum()
        };
        for x in &support {
            if (mass_at(*x) - mass_at(-x)).abs() > LAW_TOL {
                return bad(format!("law is not symmetric at support point {x}"));
            }
        }
        let mean: f64 = support.iter().zip(&probs).map(|(x, p)| x * p).sum();
        let var: f64 = support.iter().zip(&probs).map(|(x, p)| x * x * p).sum::<f64>() - mean * mean;
        if mean.abs() > LAW_TOL {
            return bad(format!("mean {mean} is not 0"));
        }
        if (var - 1.0).abs() > 1e-10 {
            return bad(format!("variance {var} is not 1"));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self::finish(DistKind::DiscreteSymmetric { support, probs }, cumulative))
    }

    pub fn from_spec(spec: &DistSpec) -> Result<Self> {
        Ok(match spec {
            DistSpec::Rademacher => Self::rademacher(),
            DistSpec::Gaussian => Self::gaussian(),
            DistSpec::Uniform => Self::uniform(),
            DistSpec::Discrete { support, probs } => Self::discrete(support.clone(), probs.clone())?,
        })
    }

    pub fn spec(&self) -> DistSpec {
        match &self.kind {
            DistKind::Rademacher => DistSpec::Rademacher,
            DistKind::StandardGaussian => DistSpec::Gaussian,
            DistKind::UniformSymmetric => DistSpec::Uniform,
            DistKind::DiscreteSymmetric { support, probs } => DistSpec::Discrete {
                support: support.clone(),
                probs: probs.clone(),
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DistKind::Rademacher => "rademacher",
            DistKind::StandardGaussian => "gaussian",
            DistKind::UniformSymmetric => "uniform",
            DistKind::DiscreteSymmetric { .. } => "discrete",
        }
    }

    /// True when the law has an atom, so singular matrices occur with positive probability.
    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, DistKind::Rademacher | DistKind::DiscreteSymmetric { .. })
    }

    /// E|xi|^p in closed form.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match &self.kind {
            DistKind::Rademacher => 1.0,
            DistKind::StandardGaussian => {
                (0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0))
                    - 0.5 * std::f64::consts::PI.ln())
                .exp()
            }
            DistKind::UniformSymmetric => SQRT3.powf(p) / (p + 1.0),
            DistKind::DiscreteSymmetric { support, probs } => support
                .iter()
                .zip(probs)
                .map(|(x, q)| if *x == 0.0 { 0.0 } else { q * x.abs().powf(p) })
                .sum(),
        }
    }

    pub fn sample_entry<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            DistKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            DistKind::StandardGaussian => rng.sample(StandardNormal),
            DistKind::UniformSymmetric => (2.0 * rng.random::<f64>() - 1.0) * SQRT3,
            DistKind::DiscreteSymmetric { support, .. } => {
                let u: f64 = rng.random();
                let idx = self.cumulative.partition_point(|&c| c <= u);
                support[idx.min(support.len() - 1)]
            }
        }
    }

    /// Fill a buffer with iid draws. Rademacher uses one bit per entry.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        if let DistKind::Rademacher = self.kind {
            for chunk in out.chunks_mut(64) {
                let mut bits = rng.next_u64();
                for x in chunk {
                    *x = if bits & 1 == 1 { 1.0 } else { -1.0 };
                    bits >>= 1;
                }
            }
        } else {
            for x in out {
                *x = self.sample_entry(rng);
            }
        }
    }

    pub fn sample_vector<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        self.fill(rng, &mut v);
        v
    }

    /// Exact characteristic function t -> E exp(i t xi) (real by symmetry).
    pub fn char_fn(&self, t: f64) -> f64 {
        match &self.kind {
            DistKind::Rademacher => t.cos(),
            DistKind::StandardGaussian => (-0.5 * t * t).exp(),
            DistKind::UniformSymmetric => {
                let a = SQRT3 * t;
                if a.abs() < 1e-8 {
                    1.0 - a * a / 6.0
                } else {
                    a.sin() / a
                }
            }
            DistKind::DiscreteSymmetric { support, probs } => {
                support.iter().zip(probs).map(|(x, p)| p * (t * x).cos()).sum()
            }
        }
    }
}

/// max over integer p in [1, p_max] of p^{-1/2} (E|xi|^p)^{1/p}.
pub fn psi2_estimate(dist: &EntryDistribution, p_max: u32) -> f64 {
    (1..=p_max.max(1))
        .map(|p| {
            let p = p as f64;
            dist.abs_moment(p).powf(1.0 / p) / p.sqrt()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSample {
    pub rows: usize,
    pub cols: usize,
    pub entries: Array2<f64>,
    pub seed: u64,
    pub distribution: EntryDistribution,
}

fn check_size(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(LabError::InvalidArgument("rows and cols must be at least 1".into()));
    }
    match rows.checked_mul(cols) {
        Some(n) if n <= ENTRY_BUDGET => Ok(()),
        _ => Err(LabError::Sizing { rows, cols }),
    }
}

/// Sample the matrix for trial `trial` of an experiment seeded with `seed`.
pub fn sample_matrix_trial(
    dist: &EntryDistribution,
    rows: usize,
    cols: usize,
    seed: u64,
    trial: u64,
) -> Result<MatrixSample> {
    check_size(rows, cols)?;
    let mut rng = substream(seed, trial, role::MATRIX);
    let mut data = vec![0.0; rows * cols];
    dist.fill(&mut rng, &mut data);
    Ok(MatrixSample {
        rows,
        cols,
        entries: Array2::from_shape_vec((rows, cols), data).expect("shape checked"),
        seed,
        distribution: dist.clone(),
    })
}

/// Row-major entries of trial `trial` written into `buf`; same stream as
/// [`sample_matrix_trial`], without the allocation.
pub fn fill_matrix_trial(dist: &EntryDistribution, seed: u64, trial: u64, buf: &mut [f64]) {
    let mut rng = substream(seed, trial, role::MATRIX);
    dist.fill(&mut rng, buf);
}

pub fn sample_matrix(dist: &EntryDistribution, rows: usize, cols: usize, seed: u64) -> Result<MatrixSample> {
    sample_matrix_trial(dist, rows, cols, seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn buffer_fill_matches_allocating_sampler() {
        for d in [EntryDistribution::gaussian(), EntryDistribution::rademacher()] {
            let m = sample_matrix_trial(&d, 7, 9, 4, 12).unwrap();
            let mut buf = vec![0.0; 63];
            fill_matrix_trial(&d, 4, 12, &mut buf);
            assert_eq!(m.entries.iter().copied().collect::<Vec<_>>(), buf);
        }
    }

    #[test]
    fn rademacher_support() {
        let d = EntryDistribution::rademacher();
        let mut rng = substream(1, 0, 0);
        for _ in 0..100 {
            let x = d.sample_entry(&mut rng);
            assert!(x == 1.0 || x == -1.0);
        }
    }

    #[test]
    fn variance_half_law_rejected() {
        let r = EntryDistribution::discrete(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]);
        assert!(matches!(r, Err(LabError::InvalidDistribution(_))));
    }

    #[test]
    fn asymmetric_law_rejected() {
        // mean 0, variance 1, but not symmetric
        let s = vec![-2.0f64.sqrt() / 1.0, 1.0 / 2.0f64.sqrt()];
        let p = vec![1.0 / 3.0, 2.0 / 3.0];
        let r = EntryDistribution::discrete(s, p);
        assert!(r.is_err());
    }

    #[test]
    fn gaussian_deterministic() {
        let d = EntryDistribution::gaussian();
        let a = d.sample_entry(&mut substream(42, 0, 0));
        let b = d.sample_entry(&mut substream(42, 0, 0));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn psi2_examples() {
        assert_relative_eq!(psi2_estimate(&EntryDistribution::rademacher(), 8), 1.0);
        assert_relative_eq!(
            psi2_estimate(&EntryDistribution::gaussian(), 2),
            (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-12
        );
        let s2 = 2.0f64.sqrt();
        let d = EntryDistribution::discrete(vec![-s2, 0.0, s2], vec![0.25, 0.5, 0.25]).unwrap();
        for p in 1..=4 {
            assert_relative_eq!(d.abs_moment(p as f64), 2f64.powf(p as f64 / 2.0) / 2.0, epsilon = 1e-12);
        }
        let want = (1..=4)
            .map(|p| (2f64.powf(p as f64 / 2.0) / 2.0).powf(1.0 / p as f64) / (p as f64).sqrt())
            .fold(0.0, f64::max);
        assert_relative_eq!(psi2_estimate(&d, 4), want, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_moments_closed_form() {
        let g = EntryDistribution::gaussian();
        assert_relative_eq!(g.abs_moment(2.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.abs_moment(4.0), 3.0, epsilon = 1e-12);
        assert_relative_eq!(g.abs_moment(3.0), 2.0 * (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(EntryDistribution::uniform().abs_moment(2.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matrix_reproducible() {
        let d = EntryDistribution::rademacher();
        let a = sample_matrix(&d, 2, 2, 7).unwrap();
        let b = sample_matrix(&d, 2, 2, 7).unwrap();
        assert_eq!(a.entries, b.entries);
        let c = sample_matrix(&d, 3, 2, 7).unwrap();
        assert!(c.entries.iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn sizing_error() {
        let d = EntryDistribution::gaussian();
        assert!(matches!(sample_matrix(&d, 1 << 20, 1 << 20, 0), Err(LabError::Sizing { .. })));
        assert!(matches!(sample_matrix(&d, usize::MAX, 2, 0), Err(LabError::Sizing { .. })));
        assert!(sample_matrix(&d, 0, 2, 0).is_err());
    }

    #[test]
    fn char_fn_at_zero_is_one() {
        for d in [
            EntryDistribution::rademacher(),
            EntryDistribution::gaussian(),
            EntryDistribution::uniform(),
        ] {
            assert_relative_eq!(d.char_fn(0.0), 1.0);
        }
    }
}
