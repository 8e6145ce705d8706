//! SGDA, SEG and TSEG.
//!
//! The step functions are pure: they take the current iterate and an already
//! sampled data point and return the next iterate. [`run`] threads kernel
//! sampling, Polyak-Ruppert averaging, truncation bookkeeping and traces.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::noise::{Kernel, KernelState};
use crate::point::{running_average, suboptimality, DecisionPoint, SaddleProblem, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgda,
    Seg,
    Tseg,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Sgda => "sgda",
            Algorithm::Seg => "seg",
            Algorithm::Tseg => "tseg",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = SaddleError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgda" => Ok(Algorithm::Sgda),
            "seg" => Ok(Algorithm::Seg),
            "tseg" => Ok(Algorithm::Tseg),
            other => Err(SaddleError::InvalidArgument(format!("unknown algorithm '{other}'"))),
        }
    }
}

fn checked_oracle(
    problem: &dyn SaddleProblem,
    z: &DecisionPoint,
    w: &KernelState,
) -> Result<crate::point::GradientSample> {
    let g = problem.oracle(z, w)?;
    if !g.is_finite() {
        return Err(SaddleError::NonFiniteGradient);
    }
    Ok(g)
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(SaddleError::InvalidArgument(format!("step size must be positive, got {eta}")))
    }
}

/// `z - eta H(z, w)`.
pub fn sgda_step(
    z: &DecisionPoint,
    w_next: &KernelState,
    eta: f64,
    problem: &dyn SaddleProblem,
) -> Result<DecisionPoint> {
    check_eta(eta)?;
    let g = checked_oracle(problem, z, w_next)?;
    Ok(z.step(eta, &g))
}

/// Extrapolate then update, both evaluations sharing `w_next`.
///
/// Returns `(z_half, z_next)`.
pub fn seg_step(
    z: &DecisionPoint,
    w_next: &KernelState,
    eta: f64,
    problem: &dyn SaddleProblem,
) -> Result<(DecisionPoint, DecisionPoint)> {
    check_eta(eta)?;
    let g = checked_oracle(problem, z, w_next)?;
    let half = z.step(eta, &g);
    let g_half = checked_oracle(problem, &half, w_next)?;
    let next = z.step(eta, &g_half);
    Ok((half, next))
}

/// Truncation sets `K_q` (origin-centred balls of radius `radius0 + q * radius_growth`)
/// and the step-change thresholds `d_k = d_const * eta_k^((1 + epsilon) / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub radius0: f64,
    pub radius_growth: f64,
    pub d_const: f64,
    pub epsilon: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            radius0: 5.0,
            radius_growth: 5.0,
            d_const: 1.0,
            epsilon: 0.25,
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SaddleError::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.radius0, "radius0")?;
        positive(self.radius_growth, "radius_growth")?;
        positive(self.d_const, "d_const")?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(SaddleError::InvalidArgument(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn radius(&self, kappa: usize) -> f64 {
        self.radius0 + kappa as f64 * self.radius_growth
    }

    pub fn contains(&self, kappa: usize, z: &DecisionPoint) -> bool {
        z.norm() <= self.radius(kappa)
    }

    pub fn threshold(&self, eta_k: f64) -> f64 {
        self.d_const * eta_k.powf((1.0 + self.epsilon) / 2.0)
    }

    /// Step exponent `1 / (1 + epsilon)` paired with this policy.
    pub fn matching_exponent(&self) -> f64 {
        1.0 / (1.0 + self.epsilon)
    }
}

/// Truncation counter, reinitialisation anchor and the iterations at which
/// truncation fired.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationState {
    pub kappa: usize,
    pub anchor_z: DecisionPoint,
    pub anchor_w: KernelState,
    pub reinit_log: Vec<usize>,
}

impl TruncationState {
    pub fn new(anchor_z: DecisionPoint, anchor_w: KernelState) -> Self {
        Self {
            kappa: 0,
            anchor_z,
            anchor_w,
            reinit_log: Vec::new(),
        }
    }
}

/// One TSEG iteration at index `k`.
///
/// The SEG candidate is rejected when it moves at least `d_k` or leaves
/// `K_kappa`; the iterate and data then return to the anchor (the random
/// stream keeps advancing) and `kappa` grows by one.
#[allow(clippy::too_many_arguments)]
pub fn tseg_step(
    z: &DecisionPoint,
    mut w: KernelState,
    eta: f64,
    d_k: f64,
    mut trunc: TruncationState,
    policy: &TruncationPolicy,
    problem: &dyn SaddleProblem,
    k: usize,
) -> Result<(DecisionPoint, KernelState, TruncationState)> {
    let (_, candidate) = seg_step(z, &w, eta, problem)?;
    let moved = candidate.distance(z);
    if moved >= d_k || !policy.contains(trunc.kappa, &candidate) {
        w.restore_data(&trunc.anchor_w);
        trunc.kappa += 1;
        trunc.reinit_log.push(k);
        return Ok((trunc.anchor_z.clone(), w, trunc));
    }
    Ok((candidate, w, trunc))
}

/// Driver options shared by all algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub n_steps: usize,
    /// Record traces every `trace_every` steps; 0 disables traces.
    pub trace_every: usize,
    /// Steps at which the running average is snapshotted.
    pub checkpoints: Vec<usize>,
    /// TSEG aborts once `kappa` exceeds this cap.
    pub truncation_cap: usize,
    /// Restart the running average after each truncation.
    pub restart_averaging: bool,
}

impl RunOptions {
    pub fn new(n_steps: usize) -> Self {
        Self {
            n_steps,
            trace_every: 0,
            checkpoints: Vec::new(),
            truncation_cap: 10_000,
            restart_averaging: false,
        }
    }

    pub fn trace_every(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    pub fn checkpoints(mut self, steps: Vec<usize>) -> Self {
        self.checkpoints = steps;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub final_z: DecisionPoint,
    pub averaged_z: DecisionPoint,
    pub n_steps: usize,
    /// `(k, |z_k - z*|)` samples.
    pub distance_trace: Option<Vec<(usize, f64)>>,
    /// `(k, G(z_k))` samples.
    pub suboptimality_trace: Option<Vec<(usize, f64)>>,
    pub truncation_count: usize,
    pub reinit_log: Vec<usize>,
    /// `(k, z_bar_k)` at the requested checkpoints.
    pub checkpoint_averages: Vec<(usize, DecisionPoint)>,
}

/// Runs `n_steps` iterations from `z0`.
///
/// Before step `k` the kernel is advanced from the current iterate, then the
/// step uses `eta_k`. For TSEG the first step is plain SEG and its output pair
/// `(z_1, w_1)` becomes the reinitialisation anchor.
#[allow(clippy::too_many_arguments)]
pub fn run(
    algorithm: Algorithm,
    problem: &dyn SaddleProblem,
    kernel: &dyn Kernel,
    z0: DecisionPoint,
    kernel_state: KernelState,
    schedule: &StepSchedule,
    policy: Option<&TruncationPolicy>,
    options: &RunOptions,
) -> Result<RunRecord> {
    schedule.validate()?;
    if options.n_steps == 0 {
        return Err(SaddleError::InvalidArgument("n_steps must be at least 1".into()));
    }
    let (dt, dm) = problem.dims();
    z0.check_dims(dt, dm)?;
    let policy = match (algorithm, policy) {
        (Algorithm::Tseg, Some(p)) => {
            p.validate()?;
            Some(p)
        }
        (Algorithm::Tseg, None) => {
            return Err(SaddleError::InvalidArgument("tseg requires a truncation policy".into()))
        }
        (_, Some(_)) => {
            return Err(SaddleError::InvalidArgument(format!(
                "{algorithm} does not take a truncation policy"
            )))
        }
        (_, None) => None,
    };

    let saddle = problem.saddle();
    let tracing = options.trace_every > 0;
    let mut distance_trace = (tracing && saddle.is_some()).then(Vec::new);
    let mut subopt_trace = (tracing
        && saddle.is_some()
        && problem.objective(z0.theta(), z0.mu()).is_some())
    .then(Vec::new);

    let mut checkpoints: Vec<usize> = options.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut next_checkpoint = checkpoints.iter().peekable();
    let mut checkpoint_averages = Vec::new();

    let mut z = z0;
    let mut w = kernel_state;
    let mut mean = DecisionPoint::zeros(dt, dm);
    let mut count = 0usize;
    let mut trunc: Option<TruncationState> = None;

    for k in 1..=options.n_steps {
        let eta = schedule.step_size(k)?;
        w = kernel.sample(w, &z)?;
        let wrap = |e: SaddleError| match e {
            SaddleError::NonFiniteGradient => SaddleError::NonFiniteIterate { iteration: k },
            other => other,
        };
        let mut truncated = false;
        z = match (algorithm, policy) {
            (Algorithm::Sgda, _) => sgda_step(&z, &w, eta, problem).map_err(wrap)?,
            (Algorithm::Seg, _) => seg_step(&z, &w, eta, problem).map_err(wrap)?.1,
            (Algorithm::Tseg, Some(policy)) => match trunc.take() {
                None => {
                    let (_, next) = seg_step(&z, &w, eta, problem).map_err(wrap)?;
                    trunc = Some(TruncationState::new(next.clone(), w.clone()));
                    next
                }
                Some(state) => {
                    let before = state.kappa;
                    let d_k = policy.threshold(eta);
                    let (next, next_w, state) =
                        tseg_step(&z, w, eta, d_k, state, policy, problem, k).map_err(wrap)?;
                    truncated = state.kappa > before;
                    if state.kappa > options.truncation_cap {
                        return Err(SaddleError::TruncationOverflow {
                            iteration: k,
                            cap: options.truncation_cap,
                        });
                    }
                    w = next_w;
                    trunc = Some(state);
                    next
                }
            },
            (Algorithm::Tseg, None) => unreachable!("policy checked above"),
        };
        if !z.is_finite() {
            return Err(SaddleError::NonFiniteIterate { iteration: k });
        }

        if truncated && options.restart_averaging {
            count = 0;
        }
        count += 1;
        mean = running_average(&mean, &z, count);

        if tracing && k % options.trace_every == 0 {
            if let (Some(trace), Some(zs)) = (distance_trace.as_mut(), saddle.as_ref()) {
                trace.push((k, z.distance(zs)));
            }
            if let Some(trace) = subopt_trace.as_mut() {
                trace.push((k, suboptimality(problem, &z)?));
            }
        }
        if next_checkpoint.peek() == Some(&&k) {
            next_checkpoint.next();
            checkpoint_averages.push((k, mean.clone()));
        }
    }

    let (truncation_count, reinit_log) = match trunc {
        Some(t) => (t.kappa, t.reinit_log),
        None => (0, Vec::new()),
    };
    Ok(RunRecord {
        final_z: z,
        averaged_z: mean,
        n_steps: options.n_steps,
        distance_trace,
        suboptimality_trace: subopt_trace,
        truncation_count,
        reinit_log,
        checkpoint_averages,
    })
}
