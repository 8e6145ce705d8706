//! Built-in problems and their default experiment settings.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::models::{EvGame, EvGameSpec, GammaMode, LinearField, LinearFieldSpec, Remark3Problem};
use crate::noise::{DemandChain, DemandChainParams, GaussianNoise, IidDemand, Kernel, Remark3Kernel};
use crate::optim::{Algorithm, TruncationPolicy};
use crate::point::{SaddleProblem, StepSchedule};

pub const PRESET_NAMES: [&str; 4] = ["martingale-ev", "markov-ev", "remark3", "linear"];

pub fn preset_description(name: &str) -> Option<&'static str> {
    Some(match name {
        "martingale-ev" => "EV charging game, i.i.d. demand, SEG",
        "markov-ev" => "EV charging game, decision-dependent AR(1) demand, TSEG",
        "remark3" => "scalar game that is bilinear far from the saddle, SEG from (1, 0)",
        "linear" => "linear field Q = 2I, Gaussian noise with identity covariance, SEG",
        _ => return None,
    })
}

/// Problem given by preset name or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Preset(String),
    Inline(InlineProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InlineProblem {
    /// `H(z, w) = Q z + w`, `w ~ N(0, noise_cov)`.
    Linear {
        q: Vec<Vec<f64>>,
        noise_cov: Vec<Vec<f64>>,
        d_theta: usize,
    },
    /// EV game with the symmetric demand chain.
    Ev {
        zones: usize,
        rho: f64,
        self_coupling: f64,
        cross_coupling: f64,
        mean_da: f64,
        mean_db: f64,
        r: f64,
        #[serde(default)]
        gamma: GammaMode,
    },
}

/// A problem ready to run: oracle, kernel and initial data sample.
#[derive(Clone)]
pub struct BuiltProblem {
    pub problem: Arc<dyn SaddleProblem>,
    pub kernel: Arc<dyn Kernel>,
    pub w0: Vec<f64>,
    /// Noise is state-dependent Markov rather than i.i.d.
    pub markov: bool,
}

impl std::fmt::Debug for BuiltProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltProblem")
            .field("dims", &self.problem.dims())
            .field("markov", &self.markov)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemDefaults {
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    pub truncation: Option<TruncationPolicy>,
    pub z0: Vec<f64>,
    pub n_steps: usize,
    pub n_replications: usize,
    pub checkpoints: Vec<usize>,
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(SaddleError::Config("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// TSEG policy with `d_k = k^(-1/2)` under `eta_k = eta0 k^(-0.8)`.
pub fn markov_truncation(eta0: f64) -> TruncationPolicy {
    let epsilon = 0.25;
    TruncationPolicy {
        radius0: 5.0,
        radius_growth: 5.0,
        d_const: eta0.powf(-(1.0 + epsilon) / 2.0),
        epsilon,
    }
}

fn ev_built(spec: EvGameSpec) -> Result<BuiltProblem> {
    let markov = spec.chain.has_couplings();
    let kernel: Arc<dyn Kernel> = if markov {
        Arc::new(DemandChain(spec.chain.clone()))
    } else {
        Arc::new(IidDemand(spec.chain.clone()))
    };
    let mut w0 = spec.chain.mean_da.clone();
    w0.extend_from_slice(&spec.chain.mean_db);
    Ok(BuiltProblem {
        problem: Arc::new(EvGame::new(spec)?),
        kernel,
        w0,
        markov,
    })
}

fn linear_built(spec: LinearFieldSpec) -> Result<BuiltProblem> {
    let d = spec.dim();
    Ok(BuiltProblem {
        kernel: Arc::new(GaussianNoise::new(&spec.noise_cov)?),
        problem: Arc::new(LinearField::new(spec)),
        w0: vec![0.0; d],
        markov: false,
    })
}

pub fn linear_preset_spec() -> LinearFieldSpec {
    LinearFieldSpec::new(
        DMatrix::from_diagonal_element(2, 2, 2.0),
        DMatrix::identity(2, 2),
        1,
    )
    .expect("valid preset")
}

pub fn build_problem(source: &ProblemSource) -> Result<BuiltProblem> {
    match source {
        ProblemSource::Preset(name) => match name.as_str() {
            "martingale-ev" => ev_built(EvGameSpec::martingale()),
            "markov-ev" => ev_built(EvGameSpec::markov()),
            "remark3" => Ok(BuiltProblem {
                problem: Arc::new(Remark3Problem),
                kernel: Arc::new(Remark3Kernel),
                w0: vec![0.0; 2],
                markov: false,
            }),
            "linear" => linear_built(linear_preset_spec()),
            other => Err(SaddleError::UnknownPreset(other.to_string())),
        },
        ProblemSource::Inline(InlineProblem::Linear { q, noise_cov, d_theta }) => {
            linear_built(LinearFieldSpec::new(matrix(q)?, matrix(noise_cov)?, *d_theta)?)
        }
        ProblemSource::Inline(InlineProblem::Ev {
            zones,
            rho,
            self_coupling,
            cross_coupling,
            mean_da,
            mean_db,
            r,
            gamma,
        }) => ev_built(EvGameSpec {
            chain: DemandChainParams::symmetric(
                *zones,
                *rho,
                *self_coupling,
                *cross_coupling,
                *mean_da,
                *mean_db,
                *r,
            )?,
            gamma_mode: *gamma,
        }),
    }
}

pub fn defaults_for(source: &ProblemSource) -> Result<ProblemDefaults> {
    let seg = |eta0, a, z0: Vec<f64>, n_steps| ProblemDefaults {
        algorithm: Algorithm::Seg,
        schedule: StepSchedule::new(eta0, a).expect("valid schedule"),
        truncation: None,
        z0,
        n_steps,
        n_replications: 2000,
        checkpoints: vec![500, 5000],
    };
    match source {
        ProblemSource::Preset(name) => match name.as_str() {
            "martingale-ev" => Ok(seg(0.17, 0.51, vec![0.0; 6], 5000)),
            "markov-ev" => Ok(ProblemDefaults {
                algorithm: Algorithm::Tseg,
                schedule: StepSchedule::new(0.17, 0.8).expect("valid schedule"),
                truncation: Some(markov_truncation(0.17)),
                ..seg(0.17, 0.8, vec![0.0; 6], 5000)
            }),
            "remark3" => Ok(ProblemDefaults {
                n_replications: 1000,
                checkpoints: vec![1000],
                ..seg(3.0, 0.6, vec![1.0, 0.0], 10_000)
            }),
            "linear" => Ok(seg(0.5, 0.6, vec![0.0; 2], 10_000)),
            other => Err(SaddleError::UnknownPreset(other.to_string())),
        },
        ProblemSource::Inline(_) => {
            let built = build_problem(source)?;
            let (dt, dm) = built.problem.dims();
            Ok(seg(0.5, 0.6, vec![0.0; dt + dm], 5000))
        }
    }
}
