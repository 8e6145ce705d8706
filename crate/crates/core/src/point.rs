//! Shared domain types: the joint iterate `z = (theta, mu)`, stochastic
//! gradient samples, polynomially decaying step sizes and the problem
//! abstraction consumed by the optimizers and diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::noise::KernelState;

/// Joint iterate `z = (theta, mu)` stored contiguously.
///
/// `theta` is the decision of the minimising player and occupies the first
/// `d_theta` entries, `mu` belongs to the maximising player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPoint {
    values: Vec<f64>,
    d_theta: usize,
}

impl DecisionPoint {
    pub fn new(theta: &[f64], mu: &[f64]) -> Result<Self> {
        if theta.is_empty() || mu.is_empty() {
            return Err(SaddleError::InvalidArgument(
                "both players need at least one coordinate".into(),
            ));
        }
        let mut values = Vec::with_capacity(theta.len() + mu.len());
        values.extend_from_slice(theta);
        values.extend_from_slice(mu);
        Ok(Self {
            values,
            d_theta: theta.len(),
        })
    }

    /// Splits a stacked vector after `d_theta` entries.
    pub fn from_stacked(values: Vec<f64>, d_theta: usize) -> Result<Self> {
        if d_theta == 0 || d_theta >= values.len() {
            return Err(SaddleError::InvalidArgument(format!(
                "cannot split a vector of length {} after {} entries",
                values.len(),
                d_theta
            )));
        }
        Ok(Self { values, d_theta })
    }

    pub fn zeros(d_theta: usize, d_mu: usize) -> Self {
        assert!(d_theta >= 1 && d_mu >= 1, "dimensions must be positive");
        Self {
            values: vec![0.0; d_theta + d_mu],
            d_theta,
        }
    }

    pub fn filled(d_theta: usize, d_mu: usize, value: f64) -> Self {
        let mut z = Self::zeros(d_theta, d_mu);
        z.values.iter_mut().for_each(|v| *v = value);
        z
    }

    pub fn theta(&self) -> &[f64] {
        &self.values[..self.d_theta]
    }

    pub fn mu(&self) -> &[f64] {
        &self.values[self.d_theta..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn d_theta(&self) -> usize {
        self.d_theta
    }

    pub fn d_mu(&self) -> usize {
        self.values.len() - self.d_theta
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d_theta(), self.d_mu())
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn distance(&self, other: &DecisionPoint) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `z - eta * g`.
    pub fn step(&self, eta: f64, g: &GradientSample) -> DecisionPoint {
        debug_assert_eq!(self.dim(), g.dim());
        let values = self
            .values
            .iter()
            .zip(g.as_slice())
            .map(|(z, g)| z - eta * g)
            .collect();
        Self {
            values,
            d_theta: self.d_theta,
        }
    }

    pub fn check_dims(&self, d_theta: usize, d_mu: usize) -> Result<()> {
        if self.d_theta != d_theta {
            return Err(SaddleError::DimensionMismatch {
                expected: d_theta,
                found: self.d_theta,
            });
        }
        if self.d_mu() != d_mu {
            return Err(SaddleError::DimensionMismatch {
                expected: d_mu,
                found: self.d_mu(),
            });
        }
        Ok(())
    }
}

/// Stacked field `[grad_theta f; -grad_mu f]` evaluated at one data sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample(pub Vec<f64>);

impl GradientSample {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Step sizes `eta_k = eta0 * k^(-a)` with `1/2 < a < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub eta0: f64,
    pub exponent_a: f64,
}

impl StepSchedule {
    pub fn new(eta0: f64, exponent_a: f64) -> Result<Self> {
        let schedule = Self { eta0, exponent_a };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(SaddleError::InvalidArgument(format!(
                "eta0 must be positive, got {}",
                self.eta0
            )));
        }
        if !(self.exponent_a > 0.5 && self.exponent_a < 1.0) {
            return Err(SaddleError::InvalidArgument(format!(
                "step exponent must lie in (1/2, 1), got {}",
                self.exponent_a
            )));
        }
        Ok(())
    }

    /// The schedule is 1-indexed; `k = 0` is rejected.
    pub fn step_size(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(SaddleError::InvalidArgument(
                "step schedule is 1-indexed".into(),
            ));
        }
        Ok(self.eta0 * (k as f64).powf(-self.exponent_a))
    }
}

pub fn step_size(schedule: &StepSchedule, k: usize) -> Result<f64> {
    schedule.step_size(k)
}

/// A stochastic saddle-point problem `min_theta max_mu E[F(theta, mu, w)]`.
///
/// Only the stochastic oracle is mandatory. The mean field, saddle and
/// objective are used by diagnostics when available.
pub trait SaddleProblem: Send + Sync {
    fn dims(&self) -> (usize, usize);

    /// `H(z, w)`.
    fn oracle(&self, z: &DecisionPoint, w: &KernelState) -> Result<GradientSample>;

    /// `H(z)`, the field averaged over the stationary data distribution at `z`.
    fn mean_field(&self, _z: &DecisionPoint) -> Result<GradientSample> {
        Err(SaddleError::Unsupported("mean field"))
    }

    fn saddle(&self) -> Option<DecisionPoint> {
        None
    }

    /// `f(theta, mu)` used by the suboptimality gap.
    fn objective(&self, _theta: &[f64], _mu: &[f64]) -> Option<f64> {
        None
    }
}

/// Gap `G(z) = f(theta, mu*) - f(theta*, mu)`.
pub fn suboptimality(problem: &dyn SaddleProblem, z: &DecisionPoint) -> Result<f64> {
    let saddle = problem.saddle().ok_or(SaddleError::SaddleUnknown)?;
    let (dt, dm) = problem.dims();
    z.check_dims(dt, dm)?;
    let upper = problem
        .objective(z.theta(), saddle.mu())
        .ok_or(SaddleError::SaddleUnknown)?;
    let lower = problem
        .objective(saddle.theta(), z.mu())
        .ok_or(SaddleError::SaddleUnknown)?;
    Ok(upper - lower)
}

/// One step of the streaming mean: `mean + (z_n - mean) / n`.
pub fn running_average(
    previous_mean: &DecisionPoint,
    new_iterate: &DecisionPoint,
    n: usize,
) -> DecisionPoint {
    assert!(n >= 1, "running average is 1-indexed");
    if n == 1 {
        return new_iterate.clone();
    }
    let inv = 1.0 / n as f64;
    let values = previous_mean
        .as_slice()
        .iter()
        .zip(new_iterate.as_slice())
        .map(|(m, z)| m + (z - m) * inv)
        .collect();
    DecisionPoint {
        values,
        d_theta: new_iterate.d_theta,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn step_size_examples() {
        let s = StepSchedule::new(0.5, 0.75).unwrap();
        assert_relative_eq!(s.step_size(16).unwrap(), 0.0625, epsilon = 1e-15);
        assert_eq!(s.step_size(1).unwrap(), 0.5);
        let s = StepSchedule::new(1.0, 2.0 / 3.0).unwrap();
        assert_relative_eq!(s.step_size(8).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn step_size_rejects_zero_index() {
        let s = StepSchedule::new(0.5, 0.75).unwrap();
        assert!(matches!(
            step_size(&s, 0),
            Err(SaddleError::InvalidArgument(_))
        ));
    }

    #[test]
    fn schedule_rejects_bad_exponent() {
        assert!(StepSchedule::new(0.1, 0.5).is_err());
        assert!(StepSchedule::new(0.1, 1.0).is_err());
        assert!(StepSchedule::new(0.0, 0.75).is_err());
    }

    #[test]
    fn step_size_strictly_decreasing() {
        let s = StepSchedule::new(0.1, 0.75).unwrap();
        let mut prev = s.step_size(1).unwrap();
        for k in 2..=1_000_000 {
            let next = s.step_size(k).unwrap();
            assert!(next < prev, "not decreasing at k = {k}");
            prev = next;
        }
    }

    #[test]
    fn partial_sums_trend() {
        // sum eta_k keeps growing by a non-vanishing amount per decade while
        // sum eta_k^2 increments shrink geometrically
        let s = StepSchedule::new(1.0, 0.75).unwrap();
        let decade = |lo: usize, hi: usize, p: i32| -> f64 {
            (lo..hi).map(|k| s.step_size(k).unwrap().powi(p)).sum()
        };
        let lin: Vec<f64> = (0..5)
            .map(|e| decade(10usize.pow(e), 10usize.pow(e + 1), 1))
            .collect();
        let sq: Vec<f64> = (0..5)
            .map(|e| decade(10usize.pow(e), 10usize.pow(e + 1), 2))
            .collect();
        for w in lin.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in sq.windows(2) {
            assert!(w[1] < 0.5 * w[0]);
        }
    }

    #[test]
    fn split_and_concat_identity() {
        let z = DecisionPoint::new(&[1.0, 2.0], &[3.0]).unwrap();
        assert_eq!(z.theta(), &[1.0, 2.0]);
        assert_eq!(z.mu(), &[3.0]);
        let back = DecisionPoint::from_stacked(z.as_slice().to_vec(), 2).unwrap();
        assert_eq!(back, z);
        assert!(DecisionPoint::new(&[], &[1.0]).is_err());
        assert!(DecisionPoint::from_stacked(vec![1.0, 2.0], 2).is_err());
    }

    #[test]
    fn running_average_examples() {
        let pts: Vec<DecisionPoint> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&v| DecisionPoint::new(&[v], &[v]).unwrap())
            .collect();
        let mut mean = DecisionPoint::zeros(1, 1);
        for (i, p) in pts.iter().enumerate() {
            mean = running_average(&mean, p, i + 1);
        }
        assert_relative_eq!(mean.theta()[0], 2.0, epsilon = 1e-15);

        let any = DecisionPoint::new(&[42.0], &[-7.0]).unwrap();
        let z = DecisionPoint::new(&[0.3], &[0.4]).unwrap();
        assert_eq!(running_average(&any, &z, 1), z);

        let c = DecisionPoint::new(&[0.7], &[-1.3]).unwrap();
        let mut mean = DecisionPoint::zeros(1, 1);
        for n in 1..=100 {
            mean = running_average(&mean, &c, n);
            assert_relative_eq!(mean.theta()[0], 0.7, epsilon = 1e-15);
            assert_relative_eq!(mean.mu()[0], -1.3, epsilon = 1e-15);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn running_average_matches_batch_mean(
            seed in any::<u64>(),
            len in 1usize..100_000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut mean = DecisionPoint::zeros(1, 1);
            let mut sum = [0.0f64; 2];
            for n in 1..=len {
                let a: f64 = rng.random_range(1.0..10.0);
                let b: f64 = rng.random_range(-10.0..-1.0);
                sum[0] += a;
                sum[1] += b;
                mean = running_average(&mean, &DecisionPoint::new(&[a], &[b]).unwrap(), n);
            }
            for (m, s) in mean.as_slice().iter().zip(sum) {
                let batch = s / len as f64;
                prop_assert!((m - batch).abs() / batch.abs() <= 1e-12);
            }
        }
    }
}
