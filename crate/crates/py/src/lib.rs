//! Python bindings for `saddle_core`.
//!
//! Points are passed as flat lists `[theta..., mu...]`; matrices as lists of rows.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use saddle_core::diagnostics;
use saddle_core::harness::experiment::CheckpointStats;
use saddle_core::harness::presets::{build_problem, BuiltProblem, InlineProblem};
use saddle_core::harness::{self, ExperimentConfig, ExperimentOutcome, ProblemSource};
use saddle_core::optim::{self, Algorithm, RunOptions, RunRecord};
use saddle_core::rng::stream;
use saddle_core::{DecisionPoint, KernelState, SaddleError};

fn err(e: SaddleError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(module = "saddle_py", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct StepSchedule {
    inner: saddle_core::StepSchedule,
}

#[pymethods]
impl StepSchedule {
    #[new]
    fn new(eta0: f64, exponent_a: f64) -> PyResult<Self> {
        Ok(Self { inner: saddle_core::StepSchedule::new(eta0, exponent_a).map_err(err)? })
    }

    #[getter]
    fn eta0(&self) -> f64 {
        self.inner.eta0
    }

    #[getter]
    fn exponent_a(&self) -> f64 {
        self.inner.exponent_a
    }

    fn step_size(&self, k: usize) -> PyResult<f64> {
        self.inner.step_size(k).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("StepSchedule(eta0={}, exponent_a={})", self.inner.eta0, self.inner.exponent_a)
    }
}

#[pyclass(module = "saddle_py", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct TruncationPolicy {
    inner: saddle_core::TruncationPolicy,
}

#[pymethods]
impl TruncationPolicy {
    #[new]
    #[pyo3(signature = (radius0 = 5.0, radius_growth = 5.0, d_const = 1.0, epsilon = 0.25))]
    fn new(radius0: f64, radius_growth: f64, d_const: f64, epsilon: f64) -> PyResult<Self> {
        let inner = saddle_core::TruncationPolicy { radius0, radius_growth, d_const, epsilon };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn radius(&self, kappa: usize) -> f64 {
        self.inner.radius(kappa)
    }

    fn threshold(&self, eta: f64) -> f64 {
        self.inner.threshold(eta)
    }

    fn __repr__(&self) -> String {
        let p = self.inner;
        format!(
            "TruncationPolicy(radius0={}, radius_growth={}, d_const={}, epsilon={})",
            p.radius0, p.radius_growth, p.d_const, p.epsilon
        )
    }
}

/// Result of a single run.
#[pyclass(module = "saddle_py", frozen, get_all)]
struct RunResult {
    final_z: Vec<f64>,
    averaged_z: Vec<f64>,
    n_steps: usize,
    truncation_count: usize,
    reinit_log: Vec<usize>,
    checkpoint_averages: Vec<(usize, Vec<f64>)>,
    distance_trace: Option<Vec<(usize, f64)>>,
}

impl From<RunRecord> for RunResult {
    fn from(r: RunRecord) -> Self {
        Self {
            final_z: r.final_z.into_vec(),
            averaged_z: r.averaged_z.into_vec(),
            n_steps: r.n_steps,
            truncation_count: r.truncation_count,
            reinit_log: r.reinit_log,
            checkpoint_averages: r.checkpoint_averages.into_iter().map(|(k, z)| (k, z.into_vec())).collect(),
            distance_trace: r.distance_trace,
        }
    }
}

/// A saddle-point problem together with its data kernel.
#[pyclass(module = "saddle_py", frozen)]
struct Problem {
    built: BuiltProblem,
}

impl Problem {
    fn point(&self, z: Vec<f64>) -> PyResult<DecisionPoint> {
        let (dt, dm) = self.built.problem.dims();
        let p = DecisionPoint::from_stacked(z, dt).map_err(err)?;
        p.check_dims(dt, dm).map_err(err)?;
        Ok(p)
    }

    fn data(&self, w: Option<Vec<f64>>, innovation: Option<Vec<f64>>) -> KernelState {
        KernelState::fixed(w.unwrap_or_else(|| self.built.w0.clone()), innovation.unwrap_or_default())
    }
}

#[pymethods]
impl Problem {
    /// Built-in problem by name (see `presets()`).
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self { built: build_problem(&ProblemSource::Preset(name.into())).map_err(err)? })
    }

    /// Linear field `H(z, w) = Q z + w` with `w ~ N(0, noise_cov)`.
    #[staticmethod]
    fn linear(q: Vec<Vec<f64>>, noise_cov: Vec<Vec<f64>>, d_theta: usize) -> PyResult<Self> {
        let source = ProblemSource::Inline(InlineProblem::Linear { q, noise_cov, d_theta });
        Ok(Self { built: build_problem(&source).map_err(err)? })
    }

    #[getter]
    fn dims(&self) -> (usize, usize) {
        self.built.problem.dims()
    }

    #[getter]
    fn markov(&self) -> bool {
        self.built.markov
    }

    fn saddle(&self) -> Option<Vec<f64>> {
        self.built.problem.saddle().map(DecisionPoint::into_vec)
    }

    fn mean_field(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = self.point(z)?;
        Ok(self.built.problem.mean_field(&z).map_err(err)?.0)
    }

    /// `H(z, w)` for a prescribed data sample.
    #[pyo3(signature = (z, w = None, innovation = None))]
    fn oracle(&self, z: Vec<f64>, w: Option<Vec<f64>>, innovation: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let z = self.point(z)?;
        Ok(self.built.problem.oracle(&z, &self.data(w, innovation)).map_err(err)?.0)
    }

    /// Central-difference Jacobian of the mean field.
    #[pyo3(signature = (z, h = None))]
    fn jacobian(&self, z: Vec<f64>, h: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
        let z = self.point(z)?;
        let problem = &self.built.problem;
        let j = diagnostics::jacobian_fd(|p: &DecisionPoint| problem.mean_field(p), &z, h).map_err(err)?;
        Ok(rows(&j))
    }

    #[pyo3(signature = (z, eta, w = None, innovation = None))]
    fn sgda_step(&self, z: Vec<f64>, eta: f64, w: Option<Vec<f64>>, innovation: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let z = self.point(z)?;
        let next = optim::sgda_step(&z, &self.data(w, innovation), eta, self.built.problem.as_ref()).map_err(err)?;
        Ok(next.into_vec())
    }

    /// Returns `(half, next)`.
    #[pyo3(signature = (z, eta, w = None, innovation = None))]
    fn seg_step(
        &self,
        z: Vec<f64>,
        eta: f64,
        w: Option<Vec<f64>>,
        innovation: Option<Vec<f64>>,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let z = self.point(z)?;
        let (half, next) =
            optim::seg_step(&z, &self.data(w, innovation), eta, self.built.problem.as_ref()).map_err(err)?;
        Ok((half.into_vec(), next.into_vec()))
    }

    /// One seeded run driven by the problem's own kernel.
    #[pyo3(signature = (algorithm, z0, schedule, n_steps, seed = 0, replication = 0, policy = None, checkpoints = Vec::new(), trace_every = 0))]
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        py: Python<'_>,
        algorithm: &str,
        z0: Vec<f64>,
        schedule: StepSchedule,
        n_steps: usize,
        seed: u64,
        replication: u64,
        policy: Option<TruncationPolicy>,
        checkpoints: Vec<usize>,
        trace_every: usize,
    ) -> PyResult<RunResult> {
        let algorithm: Algorithm = algorithm.parse().map_err(err)?;
        let z0 = self.point(z0)?;
        let state = KernelState::new(self.built.w0.clone(), stream(seed, replication));
        let options = RunOptions::new(n_steps).trace_every(trace_every).checkpoints(checkpoints);
        let policy = policy.map(|p| p.inner);
        let built = &self.built;
        let record = py
            .detach(|| {
                optim::run(
                    algorithm,
                    built.problem.as_ref(),
                    built.kernel.as_ref(),
                    z0,
                    state,
                    &schedule.inner,
                    policy.as_ref(),
                    &options,
                )
            })
            .map_err(err)?;
        Ok(record.into())
    }
}

/// Summary of a replicated experiment.
#[pyclass(module = "saddle_py", frozen)]
struct Experiment {
    outcome: ExperimentOutcome,
}

fn checkpoint_tuple(c: &CheckpointStats) -> (usize, f64, f64, bool) {
    (c.step, c.ks, c.critical_value, c.pass)
}

#[pymethods]
impl Experiment {
    #[getter]
    fn config_toml(&self) -> PyResult<String> {
        self.outcome.config.to_toml().map_err(err)
    }

    #[getter]
    fn successes(&self) -> usize {
        self.outcome.successes()
    }

    #[getter]
    fn failures(&self) -> Vec<(usize, String)> {
        self.outcome.failures().into_iter().map(|(i, s)| (i, s.to_string())).collect()
    }

    #[getter]
    fn checkpoints(&self) -> Vec<usize> {
        self.outcome.checkpoints.clone()
    }

    #[getter]
    fn mean_averaged_z(&self) -> Vec<f64> {
        self.outcome.mean_averaged_z.clone()
    }

    #[getter]
    fn saddle(&self) -> Option<Vec<f64>> {
        self.outcome.saddle.clone().map(DecisionPoint::into_vec)
    }

    /// `(step, ks, critical_value, pass)` per checkpoint.
    #[getter]
    fn ks(&self) -> Vec<(usize, f64, f64, bool)> {
        self.outcome.checkpoint_stats.iter().map(checkpoint_tuple).collect()
    }

    #[getter]
    fn sigma2(&self) -> Option<f64> {
        self.outcome.theory.as_ref().map(|t| t.sigma2)
    }

    #[getter]
    fn theoretical_covariance(&self) -> Option<Vec<Vec<f64>>> {
        self.outcome.theory.as_ref().map(|t| rows(&t.covariance))
    }

    #[getter]
    fn empirical_covariance(&self) -> Option<Vec<Vec<f64>>> {
        self.outcome.report.as_ref().map(|r| rows(&r.empirical))
    }

    #[getter]
    fn frobenius_rel_error(&self) -> Option<f64> {
        self.outcome.report.as_ref().map(|r| r.frobenius_rel_error)
    }

    #[getter]
    fn passed(&self) -> Option<bool> {
        self.outcome.passed()
    }

    /// Projection statistics at checkpoint index `i`.
    fn projection_samples(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.outcome.checkpoints.len() {
            return Err(PyValueError::new_err("checkpoint index out of range"));
        }
        Ok(self.outcome.projection_samples(i))
    }

    /// Writes the configured artifacts and returns their paths.
    fn emit(&self) -> PyResult<Vec<String>> {
        let paths = harness::emit::emit_experiment(&self.outcome).map_err(err)?;
        Ok(paths.into_iter().map(|p| p.display().to_string()).collect())
    }
}

fn config_from(text: Option<&str>, preset: Option<&str>) -> PyResult<ExperimentConfig> {
    match (text, preset) {
        (Some(t), None) => ExperimentConfig::from_toml(t).map_err(err),
        (None, Some(p)) => ExperimentConfig::preset(p).map_err(err),
        _ => Err(PyValueError::new_err("give exactly one of config_toml or preset")),
    }
}

/// Runs every replication of an experiment described by TOML text or a preset name.
#[pyfunction]
#[pyo3(signature = (config_toml = None, preset = None, workers = None))]
fn run_experiment(
    py: Python<'_>,
    config_toml: Option<&str>,
    preset: Option<&str>,
    workers: Option<usize>,
) -> PyResult<Experiment> {
    let config = config_from(config_toml, preset)?;
    let outcome = py.detach(|| harness::run_experiment(&config, workers)).map_err(err)?;
    Ok(Experiment { outcome })
}

/// Like `run_experiment` but fails when the problem has no known saddle.
#[pyfunction]
#[pyo3(signature = (config_toml = None, preset = None, workers = None))]
fn clt_check(
    py: Python<'_>,
    config_toml: Option<&str>,
    preset: Option<&str>,
    workers: Option<usize>,
) -> PyResult<Experiment> {
    let config = config_from(config_toml, preset)?;
    let outcome = py.detach(|| harness::clt_check(&config, workers)).map_err(err)?;
    Ok(Experiment { outcome })
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    harness::PRESET_NAMES.to_vec()
}

#[pyfunction]
fn ks_statistic(samples: Vec<f64>, sigma: f64) -> PyResult<f64> {
    diagnostics::ks_statistic(&samples, sigma).map_err(err)
}

#[pyfunction]
fn ks_critical_value(m: usize) -> f64 {
    diagnostics::ks_critical_value(m)
}

/// `Q^-1 Sigma Q^-T`.
#[pyfunction]
fn asymptotic_covariance(q_star: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let c = diagnostics::asymptotic_covariance(&matrix(&q_star)?, &matrix(&sigma)?).map_err(err)?;
    Ok(rows(&c))
}

#[pyfunction]
fn batch_means_covariance(stream: Vec<Vec<f64>>, n_batches: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&diagnostics::batch_means_covariance(&stream, n_batches).map_err(err)?))
}

#[pymodule]
fn saddle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<StepSchedule>()?;
    m.add_class::<TruncationPolicy>()?;
    m.add_class::<Problem>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(clt_check, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(ks_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(ks_critical_value, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(batch_means_covariance, m)?)?;
    Ok(())
}
