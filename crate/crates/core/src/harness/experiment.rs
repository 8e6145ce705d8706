//! Seeded replication runner, CLT check and the SGDA/SEG divergence demo.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    asymptotic_covariance, gradient_noise_covariance_iid, jacobian_fd, ks_critical_value,
    ks_statistic, longrun_covariance_batch_means, projection_stat, projection_variance,
    CovarianceReport,
};
use crate::error::{Result, SaddleError};
use crate::harness::config::ExperimentConfig;
use crate::harness::presets::{build_problem, BuiltProblem};
use crate::models::Remark3Problem;
use crate::noise::{Kernel, KernelState, Remark3Kernel};
use crate::optim::{run, seg_step, sgda_step, RunOptions};
use crate::point::{DecisionPoint, StepSchedule};
use crate::rng::{stream, AUXILIARY_STREAM};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationData {
    pub averaged_z: DecisionPoint,
    pub final_z: DecisionPoint,
    /// Aligned with [`ExperimentConfig::effective_checkpoints`]; empty without a known saddle.
    pub projection_stats: Vec<f64>,
    pub checkpoint_averages: Vec<DecisionPoint>,
    pub truncation_count: usize,
    pub reinit_log: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplicationOutcome {
    Success(ReplicationData),
    Failure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub replication_id: usize,
    pub outcome: ReplicationOutcome,
    /// Seconds; never written to output files.
    pub wall_time: f64,
}

impl ReplicationSummary {
    pub fn data(&self) -> Option<&ReplicationData> {
        match &self.outcome {
            ReplicationOutcome::Success(d) => Some(d),
            ReplicationOutcome::Failure(_) => None,
        }
    }
}

/// `Q*`, the noise covariance and `Q*^-1 Sigma Q*^-T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Theory {
    pub q_star: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    /// `1^T covariance 1`.
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointStats {
    pub step: usize,
    pub ks: f64,
    pub critical_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub checkpoints: Vec<usize>,
    pub summaries: Vec<ReplicationSummary>,
    pub saddle: Option<DecisionPoint>,
    pub theory: Option<Theory>,
    pub report: Option<CovarianceReport>,
    pub checkpoint_stats: Vec<CheckpointStats>,
    pub mean_averaged_z: Vec<f64>,
    /// `(k, |z_k - z*|, G(z_k))` for replication 0.
    pub trace: Option<Vec<(usize, f64, Option<f64>)>>,
}

impl ExperimentOutcome {
    pub fn successes(&self) -> usize {
        self.summaries.iter().filter(|s| s.data().is_some()).count()
    }

    pub fn failures(&self) -> Vec<(usize, &str)> {
        self.summaries
            .iter()
            .filter_map(|s| match &s.outcome {
                ReplicationOutcome::Failure(r) => Some((s.replication_id, r.as_str())),
                ReplicationOutcome::Success(_) => None,
            })
            .collect()
    }

    /// Projection statistics of all successful replications at checkpoint index `i`.
    pub fn projection_samples(&self, i: usize) -> Vec<f64> {
        self.summaries
            .iter()
            .filter_map(|s| s.data().and_then(|d| d.projection_stats.get(i).copied()))
            .collect()
    }

    /// KS verdict at the final checkpoint.
    pub fn passed(&self) -> Option<bool> {
        self.checkpoint_stats.last().map(|c| c.pass)
    }

    pub fn final_ks(&self) -> Option<f64> {
        self.checkpoint_stats.last().map(|c| c.ks)
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w.max(1));
    }
    b.build().map_err(|e| SaddleError::InvalidArgument(e.to_string()))
}

fn run_replication(
    config: &ExperimentConfig,
    built: &BuiltProblem,
    saddle: Option<&DecisionPoint>,
    checkpoints: &[usize],
    r: usize,
) -> ReplicationSummary {
    let start = Instant::now();
    let (dt, _) = built.problem.dims();
    let outcome = (|| -> Result<ReplicationData> {
        let z0 = DecisionPoint::from_stacked(config.z0.clone(), dt)?;
        let state = KernelState::new(built.w0.clone(), stream(config.base_seed, r as u64));
        let options = RunOptions::new(config.n_steps).checkpoints(checkpoints.to_vec());
        let rec = run(
            config.algorithm,
            built.problem.as_ref(),
            built.kernel.as_ref(),
            z0,
            state,
            &config.schedule,
            config.truncation.as_ref(),
            &options,
        )?;
        let checkpoint_averages: Vec<DecisionPoint> =
            rec.checkpoint_averages.into_iter().map(|(_, z)| z).collect();
        let projection_stats = match saddle {
            Some(zs) => checkpoints
                .iter()
                .zip(&checkpoint_averages)
                .map(|(k, z)| projection_stat(z, zs, *k))
                .collect(),
            None => Vec::new(),
        };
        if projection_stats.iter().any(|v: &f64| !v.is_finite()) {
            return Err(SaddleError::NonFiniteIterate { iteration: config.n_steps });
        }
        Ok(ReplicationData {
            averaged_z: rec.averaged_z,
            final_z: rec.final_z,
            projection_stats,
            checkpoint_averages,
            truncation_count: rec.truncation_count,
            reinit_log: rec.reinit_log,
        })
    })();
    ReplicationSummary {
        replication_id: r,
        outcome: match outcome {
            Ok(d) => ReplicationOutcome::Success(d),
            Err(e) => ReplicationOutcome::Failure(e.to_string()),
        },
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Jacobian at `z*` and the (long-run) gradient-noise covariance there.
pub fn theory_for(config: &ExperimentConfig, built: &BuiltProblem) -> Result<Theory> {
    let problem = built.problem.as_ref();
    let z_star = problem.saddle().ok_or(SaddleError::SaddleUnknown)?;
    let q_star = jacobian_fd(|z| problem.mean_field(z), &z_star, None)?;
    let state = KernelState::new(built.w0.clone(), stream(config.base_seed, AUXILIARY_STREAM));
    let sigma = if built.markov {
        longrun_covariance_batch_means(
            problem,
            &z_star,
            built.kernel.as_ref(),
            state,
            config.covariance_samples,
            config.covariance_batches,
        )?
    } else {
        gradient_noise_covariance_iid(
            problem,
            &z_star,
            built.kernel.as_ref(),
            state,
            config.covariance_samples,
        )?
    };
    let covariance = asymptotic_covariance(&q_star, &sigma)?;
    let sigma2 = projection_variance(&covariance, &vec![1.0; covariance.nrows()]);
    Ok(Theory {
        q_star,
        sigma,
        covariance,
        sigma2,
    })
}

/// Runs all replications and evaluates the CLT diagnostics when `z*` is known.
///
/// Results are merged in replication order, so outputs do not depend on
/// `workers`. More than 5% failed replications abort the experiment.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let built = build_problem(&config.problem_preset)?;
    let (dt, dm) = built.problem.dims();
    if config.z0.len() != dt + dm {
        return Err(SaddleError::DimensionMismatch {
            expected: dt + dm,
            found: config.z0.len(),
        });
    }
    let saddle = built.problem.saddle();
    let checkpoints = config.effective_checkpoints();

    let summaries: Vec<ReplicationSummary> = pool(workers)?.install(|| {
        (0..config.n_replications)
            .into_par_iter()
            .map(|r| run_replication(config, &built, saddle.as_ref(), &checkpoints, r))
            .collect()
    });

    let failures = summaries.iter().filter(|s| s.data().is_none()).count();
    if failures * 20 > config.n_replications {
        return Err(SaddleError::ExperimentAborted {
            failures,
            total: config.n_replications,
        });
    }

    let ok: Vec<&ReplicationData> = summaries.iter().filter_map(|s| s.data()).collect();
    let mut mean_averaged_z = vec![0.0; dt + dm];
    for d in &ok {
        for (m, v) in mean_averaged_z.iter_mut().zip(d.averaged_z.as_slice()) {
            *m += v;
        }
    }
    mean_averaged_z.iter_mut().for_each(|m| *m /= ok.len() as f64);

    let trace = if config.trace_every > 0 {
        trace_replication_zero(config, &built)?
    } else {
        None
    };

    let theory = match saddle {
        Some(_) => match theory_for(config, &built) {
            Ok(t) => Some(t),
            Err(SaddleError::Unsupported(_)) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };

    let mut report = None;
    let mut checkpoint_stats = Vec::new();
    if let (Some(zs), Some(t)) = (saddle.as_ref(), theory.as_ref()) {
        if ok.len() >= 2 {
            let scale = (config.n_steps as f64).sqrt();
            let scaled: Vec<Vec<f64>> = ok
                .iter()
                .map(|d| {
                    d.averaged_z
                        .as_slice()
                        .iter()
                        .zip(zs.as_slice())
                        .map(|(a, b)| scale * (a - b))
                        .collect()
                })
                .collect();
            report = Some(CovarianceReport::new(&scaled, &t.covariance)?);
        }
        let sigma = t.sigma2.sqrt();
        let critical_value = ks_critical_value(ok.len());
        for (i, step) in checkpoints.iter().enumerate() {
            let samples: Vec<f64> = ok.iter().map(|d| d.projection_stats[i]).collect();
            let ks = ks_statistic(&samples, sigma)?;
            checkpoint_stats.push(CheckpointStats {
                step: *step,
                ks,
                critical_value,
                pass: ks < critical_value,
            });
        }
    }

    Ok(ExperimentOutcome {
        config: config.clone(),
        checkpoints,
        summaries,
        saddle,
        theory,
        report,
        checkpoint_stats,
        mean_averaged_z,
        trace,
    })
}

/// Replays replication 0 with traces on.
fn trace_replication_zero(
    config: &ExperimentConfig,
    built: &BuiltProblem,
) -> Result<Option<Vec<(usize, f64, Option<f64>)>>> {
    let (dt, _) = built.problem.dims();
    let options = RunOptions::new(config.n_steps).trace_every(config.trace_every);
    let rec = match run(
        config.algorithm,
        built.problem.as_ref(),
        built.kernel.as_ref(),
        DecisionPoint::from_stacked(config.z0.clone(), dt)?,
        KernelState::new(built.w0.clone(), stream(config.base_seed, 0)),
        &config.schedule,
        config.truncation.as_ref(),
        &options,
    ) {
        Ok(rec) => rec,
        Err(_) => return Ok(None),
    };
    Ok(rec.distance_trace.map(|d| {
        let sub = rec.suboptimality_trace.unwrap_or_default();
        d.into_iter()
            .enumerate()
            .map(|(i, (k, dist))| (k, dist, sub.get(i).map(|s| s.1)))
            .collect()
    }))
}

/// `run_experiment` followed by the KS verdict; requires a known saddle.
pub fn clt_check(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutcome> {
    let built = build_problem(&config.problem_preset)?;
    if built.problem.saddle().is_none() {
        return Err(SaddleError::SaddleUnknown);
    }
    let outcome = run_experiment(config, workers)?;
    if outcome.checkpoint_stats.is_empty() {
        return Err(SaddleError::SaddleUnknown);
    }
    Ok(outcome)
}

/// SGDA with a constant step against SEG with a decaying schedule on the
/// ramp game, both from `z0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergenceConfig {
    pub eta: f64,
    pub sgda_steps: usize,
    pub seg_steps: usize,
    pub n_replications: usize,
    pub seed: u64,
    pub seg_schedule: StepSchedule,
    pub z0: [f64; 2],
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            sgda_steps: 200,
            seg_steps: 10_000,
            n_replications: 1000,
            seed: 0,
            seg_schedule: StepSchedule::new(3.0, 0.6).expect("valid schedule"),
            z0: [1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRow {
    pub step: usize,
    /// Mean of `|z_k|^2` over SGDA replications.
    pub sgda_mean_sq_norm: Option<f64>,
    pub sgda_se: Option<f64>,
    pub seg_mean_sq_norm: Option<f64>,
    /// Mean of `|z_k - z*|` over SEG replications.
    pub seg_mean_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceOutcome {
    pub config: DivergenceConfig,
    pub rows: Vec<DivergenceRow>,
    /// `(1 + eta^2) |z0|^2 + 2 eta^2`.
    pub one_step_prediction: f64,
    pub one_step_mean: f64,
    pub one_step_se: f64,
    pub one_step_pass: bool,
    pub sgda_growth_pass: bool,
    pub seg_final_mean_norm: Option<f64>,
    pub seg_converged_pass: bool,
    pub failures: usize,
}

impl DivergenceOutcome {
    pub fn passed(&self) -> bool {
        self.one_step_pass && self.sgda_growth_pass && self.seg_converged_pass
    }
}

#[derive(Clone)]
struct DivergenceSums {
    sgda: Vec<f64>,
    sgda_sq: Vec<f64>,
    seg_sq: Vec<f64>,
    seg_norm: Vec<f64>,
    count: usize,
    failures: usize,
}

impl DivergenceSums {
    fn new(c: &DivergenceConfig) -> Self {
        Self {
            sgda: vec![0.0; c.sgda_steps],
            sgda_sq: vec![0.0; c.sgda_steps],
            seg_sq: vec![0.0; c.seg_steps],
            seg_norm: vec![0.0; c.seg_steps],
            count: 0,
            failures: 0,
        }
    }

    fn merge(&mut self, o: &Self) {
        for (a, b) in [
            (&mut self.sgda, &o.sgda),
            (&mut self.sgda_sq, &o.sgda_sq),
            (&mut self.seg_sq, &o.seg_sq),
            (&mut self.seg_norm, &o.seg_norm),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.count += o.count;
        self.failures += o.failures;
    }
}

fn divergence_replication(c: &DivergenceConfig, r: usize, sums: &mut DivergenceSums) -> Result<()> {
    let problem = Remark3Problem;
    let z0 = DecisionPoint::new(&c.z0[..1], &c.z0[1..])?;
    let mut sgda = Vec::with_capacity(c.sgda_steps);
    let mut z = z0.clone();
    let mut w = KernelState::new(vec![0.0; 2], stream(c.seed, 2 * r as u64));
    for _ in 0..c.sgda_steps {
        w = Remark3Kernel.sample(w, &z)?;
        z = sgda_step(&z, &w, c.eta, &problem)?;
        sgda.push(z.norm_sq());
    }
    let mut seg = Vec::with_capacity(c.seg_steps);
    let mut z = z0;
    let mut w = KernelState::new(vec![0.0; 2], stream(c.seed, 2 * r as u64 + 1));
    for k in 1..=c.seg_steps {
        w = Remark3Kernel.sample(w, &z)?;
        z = seg_step(&z, &w, c.seg_schedule.step_size(k)?, &problem)?.1;
        seg.push(z.norm_sq());
    }
    if sgda.iter().chain(&seg).any(|v| !v.is_finite()) {
        return Err(SaddleError::NonFiniteIterate { iteration: 0 });
    }
    for (i, v) in sgda.iter().enumerate() {
        sums.sgda[i] += v;
        sums.sgda_sq[i] += v * v;
    }
    for (i, v) in seg.iter().enumerate() {
        sums.seg_sq[i] += v;
        sums.seg_norm[i] += v.sqrt();
    }
    sums.count += 1;
    Ok(())
}

const DIVERGENCE_CHUNK: usize = 1024;

pub fn divergence_demo(config: &DivergenceConfig, workers: Option<usize>) -> Result<DivergenceOutcome> {
    if !(config.eta > 0.0 && config.eta < 1.0) {
        return Err(SaddleError::InvalidArgument(format!(
            "eta must lie in (0, 1), got {}",
            config.eta
        )));
    }
    config.seg_schedule.validate()?;
    if config.n_replications < 2 || config.sgda_steps == 0 {
        return Err(SaddleError::InvalidArgument(
            "need at least 2 replications and 1 SGDA step".into(),
        ));
    }
    let n_chunks = config.n_replications.div_ceil(DIVERGENCE_CHUNK);
    let chunks: Vec<DivergenceSums> = pool(workers)?.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|ci| {
                let mut sums = DivergenceSums::new(config);
                let end = ((ci + 1) * DIVERGENCE_CHUNK).min(config.n_replications);
                for r in ci * DIVERGENCE_CHUNK..end {
                    if divergence_replication(config, r, &mut sums).is_err() {
                        sums.failures += 1;
                    }
                }
                sums
            })
            .collect()
    });
    let mut total = DivergenceSums::new(config);
    for c in &chunks {
        total.merge(c);
    }
    if total.failures * 20 > config.n_replications {
        return Err(SaddleError::ExperimentAborted {
            failures: total.failures,
            total: config.n_replications,
        });
    }
    let n = total.count as f64;
    let steps = config.sgda_steps.max(config.seg_steps);
    let rows: Vec<DivergenceRow> = (0..steps)
        .map(|i| {
            let sgda = (i < config.sgda_steps).then(|| {
                let m = total.sgda[i] / n;
                let var = (total.sgda_sq[i] / n - m * m).max(0.0) * n / (n - 1.0);
                (m, (var / n).sqrt())
            });
            DivergenceRow {
                step: i + 1,
                sgda_mean_sq_norm: sgda.map(|s| s.0),
                sgda_se: sgda.map(|s| s.1),
                seg_mean_sq_norm: (i < config.seg_steps).then(|| total.seg_sq[i] / n),
                seg_mean_norm: (i < config.seg_steps).then(|| total.seg_norm[i] / n),
            }
        })
        .collect();
    let z0_sq = config.z0[0] * config.z0[0] + config.z0[1] * config.z0[1];
    let eta2 = config.eta * config.eta;
    let one_step_prediction = (1.0 + eta2) * z0_sq + 2.0 * eta2;
    let one_step_mean = rows[0].sgda_mean_sq_norm.unwrap_or(f64::NAN);
    let one_step_se = rows[0].sgda_se.unwrap_or(f64::NAN);
    let growth_step = config.sgda_steps.min(200);
    let seg_final_mean_norm = config
        .seg_steps
        .checked_sub(1)
        .and_then(|i| rows[i].seg_mean_norm);
    Ok(DivergenceOutcome {
        config: config.clone(),
        one_step_prediction,
        one_step_mean,
        one_step_se,
        one_step_pass: (one_step_mean - one_step_prediction).abs() <= 3.0 * one_step_se,
        sgda_growth_pass: growth_step > 1
            && rows[growth_step - 1].sgda_mean_sq_norm > rows[0].sgda_mean_sq_norm,
        seg_converged_pass: seg_final_mean_norm.is_some_and(|v| v < 0.1),
        seg_final_mean_norm,
        failures: total.failures,
        rows,
    })
}
