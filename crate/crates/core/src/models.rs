//! Concrete saddle-point problems.
//!
//! * [`EvGame`]: relative-profit game between two EV-charging providers whose
//!   demand follows the (possibly state-dependent) AR(1) chain.
//! * [`Remark3Problem`]: the one-dimensional example on which SGDA spirals
//!   out while SEG converges.
//! * [`LinearField`]: `H(z) = Q z` with additive Gaussian noise, the setting in
//!   which the asymptotic covariance has a closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::noise::{psd_cholesky, ramp, DemandChainParams, KernelState};
use crate::point::{norm2, DecisionPoint, GradientSample, SaddleProblem};

/// Quality-of-service weight applied to each player's quadratic term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    /// `1(|x| <= 1)`.
    #[default]
    Indicator,
    /// Smoothstep taper from 1 at `|x| = 0.9` down to 0 at `|x| = 1`.
    Smooth,
}

impl GammaMode {
    pub fn weight(self, x: &[f64]) -> f64 {
        let n = norm2(x);
        match self {
            GammaMode::Indicator => {
                if n <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            GammaMode::Smooth => {
                let t = ((n - 0.9) / 0.1).clamp(0.0, 1.0);
                1.0 - t * t * (3.0 - 2.0 * t)
            }
        }
    }

    /// Radius of the ball on which the weight is identically one.
    fn flat_radius(self) -> f64 {
        match self {
            GammaMode::Indicator => 1.0,
            GammaMode::Smooth => 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvGameSpec {
    pub chain: DemandChainParams,
    pub gamma_mode: GammaMode,
}

impl EvGameSpec {
    pub fn martingale() -> Self {
        Self {
            chain: DemandChainParams::martingale_preset(),
            gamma_mode: GammaMode::Indicator,
        }
    }

    pub fn markov() -> Self {
        Self {
            chain: DemandChainParams::markov_preset(),
            gamma_mode: GammaMode::Indicator,
        }
    }
}

fn ev_field(z: &DecisionPoint, a: &[f64], b: &[f64], spec: &EvGameSpec) -> GradientSample {
    let r = &spec.chain.r;
    let ga = spec.gamma_mode.weight(z.theta());
    let gb = spec.gamma_mode.weight(z.mu());
    let mut out = Vec::with_capacity(z.dim());
    out.extend(
        z.theta()
            .iter()
            .zip(a)
            .zip(r)
            .map(|((t, a), r)| 2.0 * ga * t - (a + r)),
    );
    out.extend(
        z.mu()
            .iter()
            .zip(b)
            .zip(r)
            .map(|((m, b), r)| 2.0 * gb * m - (b + r)),
    );
    GradientSample(out)
}

/// `[2 gamma_A(theta) theta - (a + r); 2 gamma_B(mu) mu - (b + r)]` with
/// `w = (a, b)`.
pub fn ev_gradient(z: &DecisionPoint, w: &KernelState, spec: &EvGameSpec) -> Result<GradientSample> {
    let n = spec.chain.zones;
    z.check_dims(n, n)?;
    if w.w.len() != 2 * n {
        return Err(SaddleError::DimensionMismatch {
            expected: 2 * n,
            found: w.w.len(),
        });
    }
    Ok(ev_field(z, &w.w[..n], &w.w[n..], spec))
}

/// Solves the coupled first-order conditions `2 theta = a_bar + r`,
/// `2 mu = b_bar + r`, where the stationary demand means depend linearly on
/// `(theta, mu)`.
pub fn equilibrium_solve(spec: &EvGameSpec) -> Result<DecisionPoint> {
    let c = &spec.chain;
    let n = c.zones;
    let s = 1.0 / (1.0 - c.rho);
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut rhs = DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            let eye = if i == j { 2.0 } else { 0.0 };
            m[(i, j)] = eye - s * c.a1[(i, j)];
            m[(i, n + j)] = -s * c.a2[(i, j)];
            m[(n + i, j)] = -s * c.b1[(i, j)];
            m[(n + i, n + j)] = eye - s * c.b2[(i, j)];
        }
        rhs[i] = s * c.mean_da[i] + c.r[i];
        rhs[n + i] = s * c.mean_db[i] + c.r[i];
    }
    let sol = m.lu().solve(&rhs).ok_or(SaddleError::SingularSystem)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(SaddleError::SingularSystem);
    }
    let z = DecisionPoint::from_stacked(sol.as_slice().to_vec(), n)?;
    let (tn, mn) = (norm2(z.theta()), norm2(z.mu()));
    let radius = spec.gamma_mode.flat_radius();
    if tn > radius || mn > radius {
        return Err(SaddleError::BoundaryEquilibrium {
            theta_norm: tn,
            mu_norm: mn,
        });
    }
    Ok(z)
}

/// The EV-charging game as a [`SaddleProblem`].
#[derive(Debug, Clone)]
pub struct EvGame {
    pub spec: EvGameSpec,
    saddle: DecisionPoint,
    stationary_at_saddle: (Vec<f64>, Vec<f64>),
}

impl EvGame {
    pub fn new(spec: EvGameSpec) -> Result<Self> {
        let saddle = equilibrium_solve(&spec)?;
        let stationary_at_saddle = spec.chain.stationary_means(&saddle);
        Ok(Self {
            spec,
            saddle,
            stationary_at_saddle,
        })
    }
}

impl SaddleProblem for EvGame {
    fn dims(&self) -> (usize, usize) {
        (self.spec.chain.zones, self.spec.chain.zones)
    }

    fn oracle(&self, z: &DecisionPoint, w: &KernelState) -> Result<GradientSample> {
        ev_gradient(z, w, &self.spec)
    }

    fn mean_field(&self, z: &DecisionPoint) -> Result<GradientSample> {
        let n = self.spec.chain.zones;
        z.check_dims(n, n)?;
        let (a, b) = self.spec.chain.stationary_means(z);
        Ok(ev_field(z, &a, &b, &self.spec))
    }

    fn saddle(&self) -> Option<DecisionPoint> {
        Some(self.saddle.clone())
    }

    /// Objective with the demand frozen at its stationary law under `z*`.
    fn objective(&self, theta: &[f64], mu: &[f64]) -> Option<f64> {
        let n = self.spec.chain.zones;
        if theta.len() != n || mu.len() != n {
            return None;
        }
        let (a, b) = &self.stationary_at_saddle;
        let r = &self.spec.chain.r;
        let ga = self.spec.gamma_mode.weight(theta);
        let gb = self.spec.gamma_mode.weight(mu);
        let quad = |x: &[f64], g: f64| g * x.iter().map(|v| v * v).sum::<f64>();
        let lin = |x: &[f64], d: &[f64]| {
            x.iter()
                .zip(d)
                .zip(r)
                .map(|((x, d), r)| x * (d + r))
                .sum::<f64>()
        };
        Some(quad(theta, ga) - quad(mu, gb) - lin(theta, a) + lin(mu, b))
    }
}

/// `[theta (1 - R) + mu + rho_1; mu (1 - R) - theta + rho_2]`, `R = R(|z|)`,
/// where `(rho_1, rho_2)` is the innovation carried by `w`.
pub fn remark3_gradient(z: &DecisionPoint, w: &KernelState) -> Result<GradientSample> {
    z.check_dims(1, 1)?;
    if w.innovation.len() != 2 {
        return Err(SaddleError::DimensionMismatch {
            expected: 2,
            found: w.innovation.len(),
        });
    }
    let r = ramp(z.norm());
    let (t, m) = (z.theta()[0], z.mu()[0]);
    Ok(GradientSample(vec![
        t * (1.0 - r) + m + w.innovation[0],
        m * (1.0 - r) - t + w.innovation[1],
    ]))
}

/// Scalar game that is bilinear outside the unit ball and strongly
/// monotone inside radius 1/2, saddle at the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct Remark3Problem;

impl SaddleProblem for Remark3Problem {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn oracle(&self, z: &DecisionPoint, w: &KernelState) -> Result<GradientSample> {
        remark3_gradient(z, w)
    }

    fn mean_field(&self, z: &DecisionPoint) -> Result<GradientSample> {
        remark3_gradient(z, &KernelState::fixed(vec![0.0; 2], vec![0.0; 2]))
    }

    fn saddle(&self) -> Option<DecisionPoint> {
        Some(DecisionPoint::zeros(1, 1))
    }
}

/// `H(z, w) = Q z + w` with `w ~ N(0, noise_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFieldSpec {
    pub q: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
    pub d_theta: usize,
}

impl LinearFieldSpec {
    /// Checks that `Q` is square, Hurwitz (all eigenvalues with positive real
    /// part) and that the noise covariance is PSD.
    pub fn new(q: DMatrix<f64>, noise_cov: DMatrix<f64>, d_theta: usize) -> Result<Self> {
        let d = q.nrows();
        if q.ncols() != d {
            return Err(SaddleError::DimensionMismatch {
                expected: d,
                found: q.ncols(),
            });
        }
        if noise_cov.nrows() != d || noise_cov.ncols() != d {
            return Err(SaddleError::DimensionMismatch {
                expected: d,
                found: noise_cov.nrows(),
            });
        }
        if d_theta == 0 || d_theta >= d {
            return Err(SaddleError::InvalidArgument(format!(
                "d_theta = {d_theta} does not split dimension {d}"
            )));
        }
        let min_re = q
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|c| c.re)
            .fold(f64::INFINITY, f64::min);
        if min_re <= 0.0 {
            return Err(SaddleError::NotHurwitz(min_re));
        }
        psd_cholesky(&noise_cov)?;
        Ok(Self {
            q,
            noise_cov,
            d_theta,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// When `Q = [[P, B], [-B^T, R]]` with symmetric `P`, `R`, the field is the
    /// gradient field of `f = theta^T P theta / 2 + theta^T B mu - mu^T R mu / 2`.
    fn potential_blocks(&self) -> bool {
        let (d, k) = (self.dim(), self.d_theta);
        let tol = 1e-12 * self.q.abs().max().max(1.0);
        for i in 0..d {
            for j in 0..d {
                let ok = match (i < k, j < k) {
                    (true, true) | (false, false) => (self.q[(i, j)] - self.q[(j, i)]).abs() <= tol,
                    _ => (self.q[(i, j)] + self.q[(j, i)]).abs() <= tol,
                };
                if !ok {
                    return false;
                }
            }
        }
        true
    }
}

pub fn linear_gradient(
    z: &DecisionPoint,
    w: &KernelState,
    spec: &LinearFieldSpec,
) -> Result<GradientSample> {
    let d = spec.dim();
    if z.dim() != d {
        return Err(SaddleError::DimensionMismatch {
            expected: d,
            found: z.dim(),
        });
    }
    if w.w.len() != d {
        return Err(SaddleError::DimensionMismatch {
            expected: d,
            found: w.w.len(),
        });
    }
    let zs = z.as_slice();
    Ok(GradientSample(
        (0..d)
            .map(|i| (0..d).map(|j| spec.q[(i, j)] * zs[j]).sum::<f64>() + w.w[i])
            .collect(),
    ))
}

#[derive(Debug, Clone)]
pub struct LinearField {
    pub spec: LinearFieldSpec,
    has_potential: bool,
}

impl LinearField {
    pub fn new(spec: LinearFieldSpec) -> Self {
        let has_potential = spec.potential_blocks();
        Self {
            spec,
            has_potential,
        }
    }
}

impl SaddleProblem for LinearField {
    fn dims(&self) -> (usize, usize) {
        (self.spec.d_theta, self.spec.dim() - self.spec.d_theta)
    }

    fn oracle(&self, z: &DecisionPoint, w: &KernelState) -> Result<GradientSample> {
        linear_gradient(z, w, &self.spec)
    }

    fn mean_field(&self, z: &DecisionPoint) -> Result<GradientSample> {
        linear_gradient(z, &KernelState::fixed(vec![0.0; self.spec.dim()], Vec::new()), &self.spec)
    }

    fn saddle(&self) -> Option<DecisionPoint> {
        let (dt, dm) = self.dims();
        Some(DecisionPoint::zeros(dt, dm))
    }

    fn objective(&self, theta: &[f64], mu: &[f64]) -> Option<f64> {
        if !self.has_potential {
            return None;
        }
        let k = self.spec.d_theta;
        if theta.len() != k || mu.len() != self.spec.dim() - k {
            return None;
        }
        let q = &self.spec.q;
        let mut f = 0.0;
        for i in 0..k {
            for j in 0..k {
                f += 0.5 * theta[i] * q[(i, j)] * theta[j];
            }
            for (j, m) in mu.iter().enumerate() {
                f += theta[i] * q[(i, k + j)] * m;
            }
        }
        for (i, mi) in mu.iter().enumerate() {
            for (j, mj) in mu.iter().enumerate() {
                f -= 0.5 * mi * q[(k + i, k + j)] * mj;
            }
        }
        Some(f)
    }
}
