//! Data-sampling kernels.
//!
//! A kernel advances a [`KernelState`] given the current iterate. Kernels are
//! immutable parameter bundles, the state owns the random stream. Two states
//! built from the same stream index and driven by the same iterates produce
//! bit-identical samples.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SaddleError};
use crate::point::DecisionPoint;
use crate::rng::Stream;

/// Current data sample `w` plus the stream that generates the next one.
///
/// `innovation` holds the standard-normal draw consumed by the most recent
/// transition; oracles whose noise enters additively read it from here.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelState {
    pub w: Vec<f64>,
    pub innovation: Vec<f64>,
    rng: Stream,
}

impl KernelState {
    pub fn new(w: Vec<f64>, rng: Stream) -> Self {
        Self {
            w,
            innovation: Vec::new(),
            rng,
        }
    }

    /// A state with prescribed data and innovation, e.g. for noise-free checks.
    pub fn fixed(w: Vec<f64>, innovation: Vec<f64>) -> Self {
        Self {
            w,
            innovation,
            rng: crate::rng::stream(0, 0),
        }
    }

    pub fn rng_mut(&mut self) -> &mut Stream {
        &mut self.rng
    }

    /// Copies the data of `anchor` while keeping this state's stream position.
    pub fn restore_data(&mut self, anchor: &KernelState) {
        self.w.clone_from(&anchor.w);
        self.innovation.clone_from(&anchor.innovation);
    }

    fn standard_normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample(StandardNormal)).collect()
    }
}

/// A (possibly state-dependent) Markov transition `w_{k+1} ~ P_z(w_k, .)`.
pub trait Kernel: Send + Sync {
    fn sample(&self, state: KernelState, z: &DecisionPoint) -> Result<KernelState>;
}

/// Lower-triangular factor `L` with `L L^T = a` for symmetric PSD `a`.
///
/// Zero pivots are allowed (singular PSD matrices such as the zero matrix);
/// any negative pivot beyond round-off is rejected.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SaddleError::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-12 * scale;
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(SaddleError::NotPositiveSemidefinite);
            }
        }
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d < -tol {
            return Err(SaddleError::NotPositiveSemidefinite);
        }
        if d <= tol {
            for i in (j + 1)..n {
                let off = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                if off.abs() > 1e-8 * scale {
                    return Err(SaddleError::NotPositiveSemidefinite);
                }
            }
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let off = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = off / pivot;
        }
    }
    Ok(l)
}

fn lower_mul(l: &DMatrix<f64>, g: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += (0..=i).map(|k| l[(i, k)] * g[k]).sum::<f64>();
    }
}

fn mat_vec_add(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += (0..x.len()).map(|k| m[(i, k)] * x[k]).sum::<f64>();
    }
}

/// Parameters of the state-dependent AR(1) demand chain
///
/// `a' = D_A + rho a + A1 theta + A2 mu`, `b' = D_B + rho b + B1 theta + B2 mu`
/// with `D_A ~ N(mean_da, cov)`, `D_B ~ N(mean_db, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandChainParams {
    pub zones: usize,
    pub rho: f64,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub mean_da: Vec<f64>,
    pub mean_db: Vec<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub r: Vec<f64>,
    chol: DMatrix<f64>,
}

impl DemandChainParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rho: f64,
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        mean_da: Vec<f64>,
        mean_db: Vec<f64>,
        innovation_cov: DMatrix<f64>,
        r: Vec<f64>,
    ) -> Result<Self> {
        let n = mean_da.len();
        if n == 0 {
            return Err(SaddleError::InvalidArgument("zone count must be positive".into()));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(SaddleError::InvalidArgument(format!(
                "AR coefficient must lie in [0, 1), got {rho}"
            )));
        }
        for m in [&a1, &a2, &b1, &b2, &innovation_cov] {
            if m.nrows() != n || m.ncols() != n {
                return Err(SaddleError::DimensionMismatch {
                    expected: n,
                    found: if m.nrows() != n { m.nrows() } else { m.ncols() },
                });
            }
        }
        for v in [&mean_db, &r] {
            if v.len() != n {
                return Err(SaddleError::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
        }
        let chol = psd_cholesky(&innovation_cov)?;
        Ok(Self {
            zones: n,
            rho,
            a1,
            a2,
            b1,
            b2,
            mean_da,
            mean_db,
            innovation_cov,
            r,
            chol,
        })
    }

    /// Coupled chain with `B1 = A2`, `B2 = A1` and identity innovations.
    pub fn symmetric(
        zones: usize,
        rho: f64,
        self_coupling: f64,
        cross_coupling: f64,
        mean_da: f64,
        mean_db: f64,
        r: f64,
    ) -> Result<Self> {
        let own = DMatrix::from_diagonal_element(zones, zones, self_coupling);
        let cross = DMatrix::from_diagonal_element(zones, zones, cross_coupling);
        Self::new(
            rho,
            own.clone(),
            cross.clone(),
            cross,
            own,
            vec![mean_da; zones],
            vec![mean_db; zones],
            DMatrix::identity(zones, zones),
            vec![r; zones],
        )
    }

    /// Three zones, `rho = 0.4`, `A1 = B2 = -0.3 I`, `A2 = B1 = 0.3 I`,
    /// `D_A ~ N(0.1 1, I)`, `D_B ~ N(0, I)`, `r = 0.3 1`.
    pub fn markov_preset() -> Self {
        Self::symmetric(3, 0.4, -0.3, 0.3, 0.1, 0.0, 0.3).expect("valid preset")
    }

    /// The Markov preset with `rho` and all couplings set to zero.
    pub fn martingale_preset() -> Self {
        Self::symmetric(3, 0.0, 0.0, 0.0, 0.1, 0.0, 0.3).expect("valid preset")
    }

    pub fn with_innovation_cov(mut self, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != self.zones || cov.ncols() != self.zones {
            return Err(SaddleError::DimensionMismatch {
                expected: self.zones,
                found: cov.nrows(),
            });
        }
        self.chol = psd_cholesky(&cov)?;
        self.innovation_cov = cov;
        Ok(self)
    }

    pub fn has_couplings(&self) -> bool {
        self.rho != 0.0
            || [&self.a1, &self.a2, &self.b1, &self.b2]
                .iter()
                .any(|m| m.iter().any(|v| *v != 0.0))
    }

    /// Stationary means `(a_bar, b_bar)` of the chain frozen at `z`.
    pub fn stationary_means(&self, z: &DecisionPoint) -> (Vec<f64>, Vec<f64>) {
        let scale = 1.0 / (1.0 - self.rho);
        let mut a = self.mean_da.clone();
        let mut b = self.mean_db.clone();
        mat_vec_add(&self.a1, z.theta(), &mut a);
        mat_vec_add(&self.a2, z.mu(), &mut a);
        mat_vec_add(&self.b1, z.theta(), &mut b);
        mat_vec_add(&self.b2, z.mu(), &mut b);
        a.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= scale);
        (a, b)
    }

    fn check(&self, state: &KernelState, z: Option<&DecisionPoint>) -> Result<()> {
        if state.w.len() != 2 * self.zones {
            return Err(SaddleError::DimensionMismatch {
                expected: 2 * self.zones,
                found: state.w.len(),
            });
        }
        if let Some(z) = z {
            z.check_dims(self.zones, self.zones)?;
        }
        Ok(())
    }

    /// Draws `(D_A, D_B)` and returns them stacked, together with the
    /// underlying standard normals.
    fn draw_innovations(&self, state: &mut KernelState) -> (Vec<f64>, Vec<f64>) {
        let n = self.zones;
        let g = state.standard_normals(2 * n);
        let mut d = Vec::with_capacity(2 * n);
        d.extend_from_slice(&self.mean_da);
        d.extend_from_slice(&self.mean_db);
        lower_mul(&self.chol, &g[..n], &mut d[..n]);
        lower_mul(&self.chol, &g[n..], &mut d[n..]);
        (d, g)
    }
}

/// One transition of the state-dependent demand chain driven by `z`.
pub fn sample_demand(
    mut state: KernelState,
    params: &DemandChainParams,
    z: &DecisionPoint,
) -> Result<KernelState> {
    params.check(&state, Some(z))?;
    let n = params.zones;
    let (mut next, g) = params.draw_innovations(&mut state);
    for i in 0..2 * n {
        next[i] += params.rho * state.w[i];
    }
    {
        let (a, b) = next.split_at_mut(n);
        mat_vec_add(&params.a1, z.theta(), a);
        mat_vec_add(&params.a2, z.mu(), a);
        mat_vec_add(&params.b1, z.theta(), b);
        mat_vec_add(&params.b2, z.mu(), b);
    }
    state.w = next;
    state.innovation = g;
    Ok(state)
}

/// Fresh `(D_A, D_B)` independent of the iterate and of history.
pub fn sample_iid(mut state: KernelState, params: &DemandChainParams) -> Result<KernelState> {
    params.check(&state, None)?;
    let (next, g) = params.draw_innovations(&mut state);
    state.w = next;
    state.innovation = g;
    Ok(state)
}

/// Cubic smoothstep ramp: 0 below 1/2, 1 above 1.
pub fn ramp(y: f64) -> f64 {
    let t = (2.0 * y - 1.0).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// `w' = R(|z|) [-theta^2/2, mu^2/2] + rho_k` with `rho_k ~ N(0, I_2)`.
pub fn sample_remark3(mut state: KernelState, z: &DecisionPoint) -> Result<KernelState> {
    z.check_dims(1, 1)?;
    let g = state.standard_normals(2);
    let r = ramp(z.norm());
    let (theta, mu) = (z.theta()[0], z.mu()[0]);
    state.w = vec![-r * theta * theta / 2.0 + g[0], r * mu * mu / 2.0 + g[1]];
    state.innovation = g;
    Ok(state)
}

/// The state-dependent demand chain.
#[derive(Debug, Clone)]
pub struct DemandChain(pub DemandChainParams);

impl Kernel for DemandChain {
    fn sample(&self, state: KernelState, z: &DecisionPoint) -> Result<KernelState> {
        sample_demand(state, &self.0, z)
    }
}

/// I.i.d. demand draws (martingale-difference gradient noise).
#[derive(Debug, Clone)]
pub struct IidDemand(pub DemandChainParams);

impl Kernel for IidDemand {
    fn sample(&self, state: KernelState, z: &DecisionPoint) -> Result<KernelState> {
        z.check_dims(self.0.zones, self.0.zones)?;
        sample_iid(state, &self.0)
    }
}

/// Kernel of the SGDA divergence example.
#[derive(Debug, Clone, Copy, Default)]
pub struct Remark3Kernel;

impl Kernel for Remark3Kernel {
    fn sample(&self, state: KernelState, z: &DecisionPoint) -> Result<KernelState> {
        sample_remark3(state, z)
    }
}

/// `w ~ N(0, cov)` i.i.d.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    chol: DMatrix<f64>,
}

impl GaussianNoise {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            chol: psd_cholesky(cov)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }
}

impl Kernel for GaussianNoise {
    fn sample(&self, mut state: KernelState, z: &DecisionPoint) -> Result<KernelState> {
        let d = self.dim();
        if z.dim() != d {
            return Err(SaddleError::DimensionMismatch {
                expected: d,
                found: z.dim(),
            });
        }
        let g = state.standard_normals(d);
        let mut w = vec![0.0; d];
        lower_mul(&self.chol, &g, &mut w);
        state.w = w;
        state.innovation = g;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    fn markov_equilibrium() -> DecisionPoint {
        // 1.5 x - 0.3 y = 0.28, 1.5 y - 0.3 x = 0.18
        let y = 0.236 / 1.44;
        let x = (0.28 + 0.3 * y) / 1.5;
        DecisionPoint::new(&[x; 3], &[y; 3]).unwrap()
    }

    #[test]
    fn degenerate_chain_returns_means() {
        let zero = DMatrix::zeros(2, 2);
        let params = DemandChainParams::new(
            0.0,
            zero.clone(),
            zero.clone(),
            zero.clone(),
            zero.clone(),
            vec![0.5, -0.25],
            vec![1.5, 2.0],
            zero,
            vec![0.0; 2],
        )
        .unwrap();
        let z = DecisionPoint::new(&[0.3, 0.1], &[-1.0, 2.0]).unwrap();
        let mut s = KernelState::new(vec![9.0; 4], stream(1, 0));
        for _ in 0..5 {
            s = sample_demand(s, &params, &z).unwrap();
            assert_eq!(s.w, vec![0.5, -0.25, 1.5, 2.0]);
        }
    }

    #[test]
    fn demand_rejects_dimension_mismatch() {
        let p = DemandChainParams::markov_preset();
        let z = DecisionPoint::zeros(2, 3);
        let s = KernelState::new(vec![0.0; 6], stream(1, 0));
        assert!(matches!(
            sample_demand(s.clone(), &p, &z),
            Err(SaddleError::DimensionMismatch { .. })
        ));
        let bad = KernelState::new(vec![0.0; 5], stream(1, 0));
        assert!(sample_iid(bad, &p).is_err());
        let z1 = DecisionPoint::zeros(2, 2);
        assert!(sample_remark3(s, &z1).is_err());
    }

    #[test]
    fn preset_structure() {
        let p = DemandChainParams::markov_preset();
        assert_eq!(p.b1, p.a2);
        assert_eq!(p.b2, p.a1);
        assert!(p.has_couplings());
        assert!(!DemandChainParams::martingale_preset().has_couplings());
    }

    #[test]
    fn rejects_bad_rho_and_non_psd() {
        let i = DMatrix::identity(1, 1);
        let mk = |rho: f64, cov: DMatrix<f64>| {
            DemandChainParams::new(
                rho,
                i.clone(),
                i.clone(),
                i.clone(),
                i.clone(),
                vec![0.0],
                vec![0.0],
                cov,
                vec![0.0],
            )
        };
        assert!(mk(1.0, i.clone()).is_err());
        assert!(mk(-0.1, i.clone()).is_err());
        assert_eq!(
            mk(0.5, DMatrix::from_element(1, 1, -1.0)).unwrap_err(),
            SaddleError::NotPositiveSemidefinite
        );
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(psd_cholesky(&indefinite).is_err());
    }

    #[test]
    fn psd_cholesky_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let l = psd_cholesky(&a).unwrap();
        let back = &l * l.transpose();
        assert!((back - a).abs().max() < 1e-12);
    }

    #[test]
    fn iid_is_degenerate_demand_bit_for_bit() {
        let p = DemandChainParams::martingale_preset();
        let mut a = KernelState::new(vec![0.0; 6], stream(11, 2));
        let mut b = a.clone();
        let z = DecisionPoint::new(&[0.7, -0.2, 0.1], &[0.3, 0.3, -4.0]).unwrap();
        for _ in 0..1000 {
            a = sample_iid(a, &p).unwrap();
            b = sample_demand(b, &p, &z).unwrap();
            assert_eq!(a.w, b.w);
        }
    }

    #[test]
    fn demand_stationary_mean_at_equilibrium() {
        let p = DemandChainParams::markov_preset();
        let z = markov_equilibrium();
        let expected = (0.1 - 0.3 * z.theta()[0] + 0.3 * z.mu()[0]) / (1.0 - 0.4);
        let mut s = KernelState::new(vec![0.0; 6], stream(3, 0));
        for _ in 0..1000 {
            s = sample_demand(s, &p, &z).unwrap();
        }
        let n = 1_000_000;
        let mut series = vec![Vec::with_capacity(n); 3];
        for _ in 0..n {
            s = sample_demand(s, &p, &z).unwrap();
            for (i, col) in series.iter_mut().enumerate() {
                col.push(s.w[i]);
            }
        }
        // AR(1) long-run standard deviation 1/(1-rho)
        let se = 1.0 / (1.0 - 0.4) / (n as f64).sqrt();
        for col in &series {
            let (m, _) = mean_var(col);
            assert!((m - expected).abs() < 3.0 * se, "mean {m} vs {expected}");
            let lag1 = col.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>()
                / col.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
            assert!((lag1 - 0.4).abs() < 0.01, "lag-1 autocorrelation {lag1}");
        }
    }

    #[test]
    fn iid_moments() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 2.0, -0.3, 0.0, -0.3, 0.5]);
        let p = DemandChainParams::martingale_preset()
            .with_innovation_cov(cov.clone())
            .unwrap();
        let mut s = KernelState::new(vec![0.0; 6], stream(5, 0));
        let n = 1_000_000;
        let mut sum = [0.0; 3];
        let mut outer = [[0.0; 3]; 3];
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            s = sample_iid(s, &p).unwrap();
            let a = [s.w[0], s.w[1], s.w[2]];
            for i in 0..3 {
                sum[i] += a[i];
            }
            draws.push(a);
        }
        let mean: Vec<f64> = sum.iter().map(|v| v / n as f64).collect();
        for a in &draws {
            for i in 0..3 {
                for j in 0..3 {
                    outer[i][j] += (a[i] - mean[i]) * (a[j] - mean[j]);
                }
            }
        }
        for i in 0..3 {
            let se = (cov[(i, i)] / n as f64).sqrt();
            assert!((mean[i] - 0.1).abs() < 3.0 * se);
            for j in 0..3 {
                let c = outer[i][j] / (n as f64 - 1.0);
                assert!((c - cov[(i, j)]).abs() < 0.01, "cov[{i}][{j}] = {c}");
            }
        }
    }

    #[test]
    fn ramp_shape() {
        assert_eq!(ramp(0.0), 0.0);
        assert_eq!(ramp(0.5), 0.0);
        assert_eq!(ramp(1.0), 1.0);
        assert_eq!(ramp(3.0), 1.0);
        assert!((ramp(0.75) - 0.5).abs() < 1e-15);
        let mut prev = 0.0;
        for i in 0..=1000 {
            let v = ramp(i as f64 / 1000.0 * 1.5);
            assert!(v >= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    fn remark3_moments(z: &DecisionPoint, n: usize) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut s = KernelState::new(vec![0.0; 2], stream(9, 1));
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            s = sample_remark3(s, z).unwrap();
            xs.push([s.w[0], s.w[1]]);
        }
        let m = [
            xs.iter().map(|x| x[0]).sum::<f64>() / n as f64,
            xs.iter().map(|x| x[1]).sum::<f64>() / n as f64,
        ];
        let mut c = [[0.0; 2]; 2];
        for x in &xs {
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += (x[i] - m[i]) * (x[j] - m[j]) / (n as f64 - 1.0);
                }
            }
        }
        (m, c)
    }

    #[test]
    fn remark3_kernel_moments() {
        let n = 100_000;
        let se = 3.0 / (n as f64).sqrt();
        let (m, c) = remark3_moments(&DecisionPoint::new(&[0.25], &[0.25]).unwrap(), n);
        assert!(m[0].abs() < se && m[1].abs() < se);
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((c[i][j] - target).abs() < 0.02);
            }
        }
        let (m, c) = remark3_moments(&DecisionPoint::new(&[1.0], &[1.0]).unwrap(), n);
        assert!((m[0] + 0.5).abs() < se && (m[1] - 0.5).abs() < se);
        assert!((c[0][0] - 1.0).abs() < 0.02 && c[0][1].abs() < 0.02);
    }

    #[test]
    fn determinism_for_equal_seeds() {
        let p = DemandChainParams::markov_preset();
        let run = || {
            let mut s = KernelState::new(vec![0.0; 6], stream(42, 17));
            let mut out = Vec::new();
            for k in 0..200 {
                let z = DecisionPoint::filled(3, 3, (k as f64 * 0.01).sin());
                s = sample_demand(s, &p, &z).unwrap();
                out.extend_from_slice(&s.w);
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn frozen_chain_windows_agree() {
        let p = DemandChainParams::markov_preset();
        let z = markov_equilibrium();
        let t = 100_000;
        let mut s = KernelState::new(vec![0.0; 6], stream(21, 0));
        let mut xs = Vec::with_capacity(4 * t);
        for _ in 0..4 * t {
            s = sample_demand(s, &p, &z).unwrap();
            xs.push(s.w[0]);
        }
        let (m1, _) = mean_var(&xs[t..2 * t]);
        let (m2, _) = mean_var(&xs[2 * t..4 * t]);
        let lr_sd = 1.0 / (1.0 - 0.4);
        let se = (lr_sd * lr_sd / t as f64 + lr_sd * lr_sd / (2 * t) as f64).sqrt();
        assert!((m1 - m2).abs() < 3.0 * se, "{m1} vs {m2}");
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let p = DemandChainParams::martingale_preset();
        let n = 200_000;
        let mut a = KernelState::new(vec![0.0; 6], stream(5, 0));
        let mut b = KernelState::new(vec![0.0; 6], stream(5, 1));
        let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            a = sample_iid(a, &p).unwrap();
            b = sample_iid(b, &p).unwrap();
            xs.push(a.w[0]);
            ys.push(b.w[0]);
        }
        let (mx, vx) = mean_var(&xs);
        let (my, vy) = mean_var(&ys);
        let corr = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / ((n as f64 - 1.0) * (vx * vy).sqrt());
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn gaussian_noise_rejects_non_psd() {
        assert!(GaussianNoise::new(&DMatrix::from_element(1, 1, -2.0)).is_err());
        let g = GaussianNoise::new(&DMatrix::identity(2, 2)).unwrap();
        let s = KernelState::new(vec![0.0; 2], stream(0, 0));
        assert!(g.sample(s, &DecisionPoint::zeros(2, 1)).is_err());
    }
}
