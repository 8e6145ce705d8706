//! Limit-theorem diagnostics: Jacobians, noise and long-run covariances,
//! asymptotic covariance, KS statistics and histogram/QQ tables.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SaddleError};
use crate::noise::{Kernel, KernelState};
use crate::point::{DecisionPoint, GradientSample, SaddleProblem};

/// Eigenvalues above `-PSD_TOLERANCE` are treated as zero.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Lag-1 autocorrelation of batch means above which the batch length is
/// rejected.
pub const MAX_BATCH_AUTOCORRELATION: f64 = 0.1;

/// Two-sided 1% Kolmogorov critical value for `m` samples.
pub fn ks_critical_value(m: usize) -> f64 {
    1.63 / (m as f64).sqrt()
}

pub fn default_fd_step(z: &DecisionPoint) -> f64 {
    let inf = z.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    1e-5 * (1.0 + inf)
}

/// Central-difference Jacobian of `field` at `z`.
pub fn jacobian_fd<F>(field: F, z: &DecisionPoint, h: Option<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DecisionPoint) -> Result<GradientSample>,
{
    let h = h.unwrap_or_else(|| default_fd_step(z));
    if !(h > 0.0 && h.is_finite()) {
        return Err(SaddleError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let d = z.dim();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut plus = z.clone();
        plus.as_mut_slice()[j] += h;
        let mut minus = z.clone();
        minus.as_mut_slice()[j] -= h;
        let fp = field(&plus)?;
        let fm = field(&minus)?;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(SaddleError::NonFiniteGradient);
        }
        if fp.dim() != d || fm.dim() != d {
            return Err(SaddleError::DimensionMismatch {
                expected: d,
                found: fp.dim(),
            });
        }
        for i in 0..d {
            jac[(i, j)] = (fp.0[i] - fm.0[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Streaming mean and covariance (Welford).
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    n: usize,
    mean: Vec<f64>,
    m2: DMatrix<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * inv;
        }
        for i in 0..delta.len() {
            let after_i = x[i] - self.mean[i];
            for j in 0..=i {
                self.m2[(i, j)] += delta[j] * after_i;
            }
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.n < 2 {
            return Err(SaddleError::EmptySamples);
        }
        let mut c = self.m2.clone() / (self.n - 1) as f64;
        for i in 0..c.nrows() {
            for j in 0..i {
                c[(j, i)] = c[(i, j)];
            }
        }
        Ok(c)
    }
}

/// Unbiased sample covariance of row vectors.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let first = rows.first().ok_or(SaddleError::EmptySamples)?;
    let mut acc = CovarianceAccumulator::new(first.len());
    for r in rows {
        if r.len() != first.len() {
            return Err(SaddleError::DimensionMismatch {
                expected: first.len(),
                found: r.len(),
            });
        }
        acc.push(r);
    }
    acc.covariance()
}

/// Sample covariance of `H(z*, w_i)` over independent kernel draws.
pub fn gradient_noise_covariance_iid(
    problem: &dyn SaddleProblem,
    z_star: &DecisionPoint,
    kernel: &dyn Kernel,
    state: KernelState,
    n_samples: usize,
) -> Result<DMatrix<f64>> {
    if n_samples < 1000 {
        return Err(SaddleError::InvalidArgument(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    let mut acc = CovarianceAccumulator::new(z_star.dim());
    let mut w = state;
    for _ in 0..n_samples {
        w = kernel.sample(w, z_star)?;
        let g = problem.oracle(z_star, &w)?;
        if !g.is_finite() {
            return Err(SaddleError::NonFiniteGradient);
        }
        acc.push(&g.0);
    }
    acc.covariance()
}

/// Lag-1 autocorrelation of each coordinate.
pub fn lag1_autocorrelation(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let n = rows.len() as f64;
    (0..first.len())
        .map(|i| {
            let mean = rows.iter().map(|r| r[i]).sum::<f64>() / n;
            let var: f64 = rows.iter().map(|r| (r[i] - mean).powi(2)).sum();
            if var == 0.0 {
                return 0.0;
            }
            let cov: f64 = rows
                .windows(2)
                .map(|w| (w[0][i] - mean) * (w[1][i] - mean))
                .sum();
            cov / var
        })
        .collect()
}

/// Batch-means long-run covariance of a stationary stream.
///
/// Returns `batch_length * Cov(batch means)`.
pub fn batch_means_covariance(stream: &[Vec<f64>], n_batches: usize) -> Result<DMatrix<f64>> {
    if stream.is_empty() {
        return Err(SaddleError::EmptySamples);
    }
    if n_batches < 2 || !stream.len().is_multiple_of(n_batches) {
        return Err(SaddleError::InvalidArgument(format!(
            "{} samples cannot be split into {n_batches} batches",
            stream.len()
        )));
    }
    let len = stream.len() / n_batches;
    let d = stream[0].len();
    let means: Vec<Vec<f64>> = stream
        .chunks(len)
        .map(|batch| {
            let mut m = vec![0.0; d];
            for r in batch {
                for (a, v) in m.iter_mut().zip(r) {
                    *a += v;
                }
            }
            m.iter_mut().for_each(|a| *a /= len as f64);
            m
        })
        .collect();
    let worst = lag1_autocorrelation(&means)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if worst > MAX_BATCH_AUTOCORRELATION {
        return Err(SaddleError::InsufficientBatchLength(worst));
    }
    Ok(sample_covariance(&means)? * len as f64)
}

/// Long-run covariance of `H(z*, w_k)` along the chain frozen at `z*`.
///
/// One batch length of burn-in is discarded first.
pub fn longrun_covariance_batch_means(
    problem: &dyn SaddleProblem,
    z_star: &DecisionPoint,
    kernel: &dyn Kernel,
    state: KernelState,
    n_samples: usize,
    n_batches: usize,
) -> Result<DMatrix<f64>> {
    if n_batches < 2 || n_samples == 0 || !n_samples.is_multiple_of(n_batches) {
        return Err(SaddleError::InvalidArgument(format!(
            "{n_samples} samples cannot be split into {n_batches} batches"
        )));
    }
    let burn_in = n_samples / n_batches;
    let mut w = state;
    for _ in 0..burn_in {
        w = kernel.sample(w, z_star)?;
    }
    let mut stream = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        w = kernel.sample(w, z_star)?;
        let g = problem.oracle(z_star, &w)?;
        if !g.is_finite() {
            return Err(SaddleError::NonFiniteGradient);
        }
        stream.push(g.0);
    }
    batch_means_covariance(&stream, n_batches)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `Q*^-1 Sigma Q*^-T`, symmetrized.
pub fn asymptotic_covariance(q_star: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = q_star.nrows();
    if q_star.ncols() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(SaddleError::DimensionMismatch {
            expected: d,
            found: sigma.nrows(),
        });
    }
    let smallest = q_star
        .clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |a, v| a.min(*v));
    if smallest <= 1e-10 {
        return Err(SaddleError::SingularSystem);
    }
    let inv = q_star.clone().try_inverse().ok_or(SaddleError::SingularSystem)?;
    Ok(symmetrize(&(&inv * sigma * inv.transpose())))
}

/// Symmetrizes `m` and clips eigenvalues in `[-PSD_TOLERANCE, 0)` to zero.
pub fn clip_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = symmetrize(m);
    let eig = s.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if min < -PSD_TOLERANCE {
        return Err(SaddleError::NotPositiveSemidefinite);
    }
    if min >= 0.0 {
        return Ok(s);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    Ok(symmetrize(
        &(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()),
    ))
}

pub fn frobenius_relative_error(empirical: &DMatrix<f64>, theoretical: &DMatrix<f64>) -> f64 {
    (empirical - theoretical).norm() / theoretical.norm()
}

/// `u^T M u`.
pub fn projection_variance(m: &DMatrix<f64>, direction: &[f64]) -> f64 {
    let u = DVector::from_column_slice(direction);
    (u.transpose() * m * &u)[(0, 0)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionVariance {
    pub direction: String,
    pub empirical: f64,
    pub theoretical: f64,
}

/// Empirical versus theoretical covariance of `sqrt(n) (z_bar_n - z*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub empirical: DMatrix<f64>,
    pub theoretical: DMatrix<f64>,
    pub frobenius_rel_error: f64,
    pub projection_variances: Vec<ProjectionVariance>,
}

impl CovarianceReport {
    /// Compares the sample covariance of `scaled` (rows of `sqrt(n)(z_bar - z*)`)
    /// with `theoretical`, along the all-ones direction and every coordinate.
    pub fn new(scaled: &[Vec<f64>], theoretical: &DMatrix<f64>) -> Result<Self> {
        let empirical = clip_psd(&sample_covariance(scaled)?)?;
        let theoretical = clip_psd(theoretical)?;
        if empirical.nrows() != theoretical.nrows() {
            return Err(SaddleError::DimensionMismatch {
                expected: theoretical.nrows(),
                found: empirical.nrows(),
            });
        }
        let d = empirical.nrows();
        let mut projection_variances = vec![ProjectionVariance {
            direction: "ones".into(),
            empirical: projection_variance(&empirical, &vec![1.0; d]),
            theoretical: projection_variance(&theoretical, &vec![1.0; d]),
        }];
        for i in 0..d {
            projection_variances.push(ProjectionVariance {
                direction: format!("e{}", i + 1),
                empirical: empirical[(i, i)],
                theoretical: theoretical[(i, i)],
            });
        }
        Ok(Self {
            frobenius_rel_error: frobenius_relative_error(&empirical, &theoretical),
            empirical,
            theoretical,
            projection_variances,
        })
    }
}

/// `sqrt(n) 1^T (z_bar - z*)`.
pub fn projection_stat(z_bar: &DecisionPoint, z_star: &DecisionPoint, n: usize) -> f64 {
    let s: f64 = z_bar
        .as_slice()
        .iter()
        .zip(z_star.as_slice())
        .map(|(a, b)| a - b)
        .sum();
    (n as f64).sqrt() * s
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid standard normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `sup_x |F_m(x) - Phi(x / sigma)|` over the jump points of the empirical CDF.
pub fn ks_statistic(samples: &[f64], sigma: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(SaddleError::EmptySamples);
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SaddleError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(SaddleError::InvalidArgument("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let normal = std_normal();
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal.cdf(x / sigma);
        d = d.max((i + 1) as f64 / m - f).max(f - i as f64 / m);
    }
    Ok(d)
}

/// Density histogram over `[min, max]` plus normal QQ pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramQq {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// `(theoretical quantile at (i - 0.5)/m, i-th order statistic)`.
    pub qq: Vec<(f64, f64)>,
}

pub fn histogram_and_qq(samples: &[f64], n_bins: usize, sigma: f64) -> Result<HistogramQq> {
    if samples.is_empty() {
        return Err(SaddleError::EmptySamples);
    }
    if n_bins < 2 {
        return Err(SaddleError::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SaddleError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let range = hi - lo;
    if !(range > 0.0 && range.is_finite()) {
        return Err(SaddleError::DegenerateRange(range));
    }
    let width = range / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + i as f64 * width })
        .collect();
    let mut counts = vec![0usize; n_bins];
    for x in &sorted {
        let idx = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    let m = sorted.len() as f64;
    let densities = counts.iter().map(|c| *c as f64 / (m * width)).collect();
    let qq = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (sigma * normal_quantile((i as f64 + 0.5) / m), *x))
        .collect();
    Ok(HistogramQq {
        edges,
        densities,
        qq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EvGame, EvGameSpec, LinearField, LinearFieldSpec};
    use crate::noise::{DemandChain, GaussianNoise, IidDemand};
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn linear(q: DMatrix<f64>, cov: DMatrix<f64>) -> (LinearField, GaussianNoise) {
        let spec = LinearFieldSpec::new(q, cov.clone(), 1).unwrap();
        (LinearField::new(spec), GaussianNoise::new(&cov).unwrap())
    }

    fn ev_state(seed: u64) -> KernelState {
        KernelState::new(vec![0.0; 6], stream(seed, 0))
    }

    #[test]
    fn jacobian_linear_field() {
        let q = DMatrix::from_diagonal_element(2, 2, 2.0);
        let (p, _) = linear(q.clone(), DMatrix::identity(2, 2));
        let z = DecisionPoint::new(&[0.3], &[-1.2]).unwrap();
        let j = jacobian_fd(|z| p.mean_field(z), &z, Some(1e-5)).unwrap();
        assert!((j - q).abs().max() < 1e-8);
    }

    #[test]
    fn jacobian_ev_presets() {
        let game = EvGame::new(EvGameSpec::martingale()).unwrap();
        let z = game.saddle().unwrap();
        let j = jacobian_fd(|z| game.mean_field(z), &z, None).unwrap();
        assert!((j - DMatrix::from_diagonal_element(6, 6, 2.0)).abs().max() < 1e-6);

        let game = EvGame::new(EvGameSpec::markov()).unwrap();
        let z = game.saddle().unwrap();
        let j = jacobian_fd(|z| game.mean_field(z), &z, None).unwrap();
        let mut expected = DMatrix::zeros(6, 6);
        for i in 0..3 {
            expected[(i, i)] = 2.5;
            expected[(i + 3, i + 3)] = 2.5;
            expected[(i, i + 3)] = -0.5;
            expected[(i + 3, i)] = -0.5;
        }
        assert!((&j - &expected).abs().max() < 1e-6);

        // second oracle: 2I - coupling / (1 - rho) with the chain's own matrices
        let c = &game.spec.chain;
        let mut coupling = DMatrix::zeros(6, 6);
        coupling.view_mut((0, 0), (3, 3)).copy_from(&c.a1);
        coupling.view_mut((0, 3), (3, 3)).copy_from(&c.a2);
        coupling.view_mut((3, 0), (3, 3)).copy_from(&c.b1);
        coupling.view_mut((3, 3), (3, 3)).copy_from(&c.b2);
        let analytic = DMatrix::from_diagonal_element(6, 6, 2.0) - coupling / (1.0 - c.rho);
        assert!((j - analytic).abs().max() < 1e-6);
    }

    #[test]
    fn jacobian_second_order_convergence() {
        // H(z) = (z1^2 + z1 z2, sin-free quadratic) with analytic Jacobian
        let field = |z: &DecisionPoint| -> Result<GradientSample> {
            let (x, y) = (z.as_slice()[0], z.as_slice()[1]);
            Ok(GradientSample(vec![x * x * x + x * y, y * y * y - 2.0 * x * y * y]))
        };
        let z = DecisionPoint::new(&[0.7], &[-1.3]).unwrap();
        let (x, y) = (0.7, -1.3);
        let exact = DMatrix::from_row_slice(2, 2, &[3.0 * x * x + y, x, -2.0 * y * y, 3.0 * y * y - 4.0 * x * y]);
        let e1 = (jacobian_fd(field, &z, Some(1e-3)).unwrap() - &exact).abs().max();
        let e2 = (jacobian_fd(field, &z, Some(5e-4)).unwrap() - &exact).abs().max();
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn jacobian_rejects_non_finite() {
        let field = |_: &DecisionPoint| Ok(GradientSample(vec![f64::NAN, 0.0]));
        let z = DecisionPoint::zeros(1, 1);
        assert_eq!(jacobian_fd(field, &z, None).unwrap_err(), SaddleError::NonFiniteGradient);
    }

    #[test]
    fn iid_noise_covariance() {
        let (p, k) = linear(DMatrix::from_diagonal_element(2, 2, 2.0), DMatrix::identity(2, 2));
        let n = 200_000;
        let c = gradient_noise_covariance_iid(&p, &DecisionPoint::zeros(1, 1), &k, KernelState::new(vec![0.0; 2], stream(1, 0)), n).unwrap();
        let tol = 3.0 * (2.0 / n as f64).sqrt();
        assert!((c - DMatrix::identity(2, 2)).abs().max() < tol);

        let game = EvGame::new(EvGameSpec::martingale()).unwrap();
        let z = game.saddle().unwrap();
        let c = gradient_noise_covariance_iid(&game, &z, &IidDemand(game.spec.chain.clone()), ev_state(2), 100_000).unwrap();
        assert!((c - DMatrix::identity(6, 6)).abs().max() < 0.02);

        let (p, k) = linear(DMatrix::from_diagonal_element(2, 2, 2.0), DMatrix::zeros(2, 2));
        let c = gradient_noise_covariance_iid(&p, &DecisionPoint::zeros(1, 1), &k, KernelState::new(vec![0.0; 2], stream(1, 0)), 1000).unwrap();
        assert_eq!(c, DMatrix::zeros(2, 2));
        assert!(gradient_noise_covariance_iid(&p, &DecisionPoint::zeros(1, 1), &k, KernelState::new(vec![0.0; 2], stream(1, 0)), 999).is_err());
    }

    #[test]
    fn batch_means_ar1() {
        let rho = 0.4;
        let mut rng = stream(5, 0);
        let mut x = 0.0;
        let stream: Vec<Vec<f64>> = (0..1_000_000)
            .map(|_| {
                x = rho * x + rng.sample::<f64, _>(StandardNormal);
                vec![x]
            })
            .collect();
        let v = batch_means_covariance(&stream, 10_000).unwrap()[(0, 0)];
        let expected = 1.0 / (1.0 - rho) / (1.0 - rho);
        assert!((v / expected - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn batch_means_detects_short_batches() {
        let mut rng = stream(6, 0);
        let mut x = 0.0;
        let stream: Vec<Vec<f64>> = (0..100_000)
            .map(|_| {
                x = 0.999 * x + rng.sample::<f64, _>(StandardNormal);
                vec![x]
            })
            .collect();
        assert!(matches!(
            batch_means_covariance(&stream, 10_000),
            Err(SaddleError::InsufficientBatchLength(_))
        ));
        assert!(batch_means_covariance(&stream, 7).is_err());
    }

    #[test]
    fn markov_longrun_covariance() {
        let game = EvGame::new(EvGameSpec::markov()).unwrap();
        let z = game.saddle().unwrap();
        let c = longrun_covariance_batch_means(&game, &z, &DemandChain(game.spec.chain.clone()), ev_state(7), 1_000_000, 10_000).unwrap();
        let target = 1.0 / 0.36;
        for i in 0..6 {
            for j in 0..6 {
                let e = if i == j { target } else { 0.0 };
                assert!((c[(i, j)] - e).abs() < 0.07 * target, "({i},{j}) {}", c[(i, j)]);
            }
        }
    }

    #[test]
    fn batch_means_agrees_with_iid_estimator() {
        let game = EvGame::new(EvGameSpec::martingale()).unwrap();
        let z = game.saddle().unwrap();
        let kernel = IidDemand(game.spec.chain.clone());
        let n = 1_000_000;
        let batches = 10_000;
        let iid = gradient_noise_covariance_iid(&game, &z, &kernel, ev_state(8), n).unwrap();
        let bm = longrun_covariance_batch_means(&game, &z, &kernel, ev_state(9), n, batches).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let s2 = iid[(i, i)] * iid[(j, j)] + iid[(i, j)].powi(2);
                let se = (s2 / n as f64 + s2 / (batches - 1) as f64).sqrt();
                assert!((iid[(i, j)] - bm[(i, j)]).abs() < 3.0 * se);
            }
        }
    }

    #[test]
    fn asymptotic_covariance_examples() {
        let c = asymptotic_covariance(&DMatrix::from_diagonal_element(2, 2, 2.0), &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(c, DMatrix::from_diagonal_element(2, 2, 0.25), epsilon = 1e-15);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert_relative_eq!(asymptotic_covariance(&DMatrix::identity(2, 2), &s).unwrap(), s, epsilon = 1e-15);
        let mut q = DMatrix::zeros(6, 6);
        for i in 0..3 {
            q[(i, i)] = 2.5;
            q[(i + 3, i + 3)] = 2.5;
            q[(i, i + 3)] = -0.5;
            q[(i + 3, i)] = -0.5;
        }
        let c = asymptotic_covariance(&q, &DMatrix::from_diagonal_element(6, 6, 1.0 / 0.36)).unwrap();
        let sigma2 = projection_variance(&c, &[1.0; 6]);
        assert_relative_eq!(sigma2, 1.5 / 0.36, epsilon = 1e-12);
        assert_eq!(
            asymptotic_covariance(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]), &s).unwrap_err(),
            SaddleError::SingularSystem
        );
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[0.0], 1.0).unwrap(), 0.5);
        assert_eq!(ks_statistic(&[], 1.0).unwrap_err(), SaddleError::EmptySamples);
        let m = 1000;
        let q: Vec<f64> = (1..=m).map(|i| normal_quantile((i as f64 - 0.5) / m as f64)).collect();
        assert!(ks_statistic(&q, 1.0).unwrap() <= 0.5 / m as f64 + 1e-6);
    }

    #[test]
    fn ks_power_under_null() {
        let m = 2000;
        let mut passes = 0;
        for seed in 0..40 {
            let mut rng = stream(seed, 1);
            let s: Vec<f64> = (0..m).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            if ks_statistic(&s, 2.0).unwrap() < ks_critical_value(m) {
                passes += 1;
            }
        }
        assert!(passes >= 38, "{passes}");
    }

    #[test]
    fn normal_cdf_accuracy() {
        let table = [(0.0, 0.5), (1.0, 0.841_344_746_068_542_9), (-1.96, 0.024_997_895_148_220_4), (3.0, 0.998_650_101_968_369_9)];
        for (x, p) in table {
            assert!((normal_cdf(x) - p).abs() < 1e-7);
        }
    }

    #[test]
    fn histogram_examples() {
        let h = histogram_and_qq(&[-1.0, 1.0], 2, 1.0).unwrap();
        assert_eq!(h.edges, vec![-1.0, 0.0, 1.0]);
        assert_eq!(h.densities, vec![0.5, 0.5]);
        assert_eq!(histogram_and_qq(&[3.0, 3.0], 4, 1.0).unwrap_err(), SaddleError::DegenerateRange(0.0));
        assert!(histogram_and_qq(&[1.0, 2.0], 1, 1.0).is_err());

        let m = 500;
        let sigma = 1.7;
        let s: Vec<f64> = (0..m).map(|i| sigma * normal_quantile((i as f64 + 0.5) / m as f64)).collect();
        let h = histogram_and_qq(&s, 20, sigma).unwrap();
        for (t, x) in &h.qq {
            assert!((x - t).abs() < 1e-6);
        }
        let mass: f64 = h.densities.iter().zip(h.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_report_basics() {
        let mut rng = stream(11, 0);
        let rows: Vec<Vec<f64>> = (0..20_000)
            .map(|_| vec![0.5 * rng.sample::<f64, _>(StandardNormal), 0.5 * rng.sample::<f64, _>(StandardNormal)])
            .collect();
        let r = CovarianceReport::new(&rows, &DMatrix::from_diagonal_element(2, 2, 0.25)).unwrap();
        assert!(r.frobenius_rel_error < 0.05);
        assert_eq!(r.projection_variances.len(), 3);
        assert_eq!(r.projection_variances[0].theoretical, 0.5);
        assert!(clip_psd(&DMatrix::from_diagonal_element(2, 2, -1.0)).is_err());
        let tiny = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-10]);
        let clipped = clip_psd(&tiny).unwrap();
        assert!(clipped.clone().symmetric_eigen().eigenvalues.iter().all(|v| *v >= -1e-15));
    }

    #[test]
    fn projection_stat_example() {
        let zs = DecisionPoint::new(&[0.2], &[0.1]).unwrap();
        let zb = DecisionPoint::new(&[0.3], &[0.1]).unwrap();
        assert_relative_eq!(projection_stat(&zb, &zs, 100), 1.0, epsilon = 1e-12);
    }

    fn psd_matrix(d: usize, entries: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_iterator(d, d, entries.iter().copied());
        &a * a.transpose()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn asymptotic_covariance_is_symmetric_psd(
            d in 1usize..5,
            a in prop::collection::vec(-2.0f64..2.0, 16),
            q in prop::collection::vec(-1.0f64..1.0, 16),
        ) {
            let sigma = psd_matrix(d, &a[..d * d]);
            let qm = DMatrix::from_iterator(d, d, q[..d * d].iter().copied())
                + DMatrix::from_diagonal_element(d, d, 3.0);
            let c = asymptotic_covariance(&qm, &sigma).unwrap();
            prop_assert!((&c - c.transpose()).abs().max() <= 1e-10);
            let min = c.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v));
            prop_assert!(min >= -PSD_TOLERANCE);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ks_is_permutation_invariant_and_scales(
            samples in prop::collection::vec(-5.0f64..5.0, 1..200),
            sigma in 0.1f64..4.0,
            shift in 0usize..200,
            exp in -4i32..5,
            c in 0.01f64..100.0,
        ) {
            let base = ks_statistic(&samples, sigma).unwrap();
            let mut rotated = samples.clone();
            let len = rotated.len();
            rotated.rotate_left(shift % len);
            rotated.reverse();
            prop_assert_eq!(base, ks_statistic(&rotated, sigma).unwrap());

            let p = 2f64.powi(exp);
            let scaled: Vec<f64> = samples.iter().map(|x| p * x).collect();
            prop_assert_eq!(base, ks_statistic(&scaled, p * sigma).unwrap());

            let scaled: Vec<f64> = samples.iter().map(|x| c * x).collect();
            prop_assert!((base - ks_statistic(&scaled, c * sigma).unwrap()).abs() <= 1e-12);
        }
    }
}
