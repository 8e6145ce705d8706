//! Declarative experiment configuration (TOML).
//!
//! A config file may set any subset of fields. Missing fields are filled from
//! the defaults of the selected problem, then command-line overrides win.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaddleError};
use crate::harness::presets::{defaults_for, ProblemSource};
use crate::optim::{Algorithm, TruncationPolicy};
use crate::point::StepSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitKind {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for EmitKind {
    type Err = SaddleError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(EmitKind::Csv),
            "json" => Ok(EmitKind::Json),
            "svg" => Ok(EmitKind::Svg),
            other => Err(SaddleError::Config(format!("unknown emit kind '{other}'"))),
        }
    }
}

/// Parses a comma-separated emit list such as `csv,json`.
pub fn parse_emit_list(s: &str) -> Result<Vec<EmitKind>> {
    let mut kinds = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    kinds.sort_unstable();
    kinds.dedup();
    Ok(kinds)
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem_preset: ProblemSource,
    pub algorithm: Algorithm,
    pub schedule: StepSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationPolicy>,
    /// Starting point, `theta` then `mu`.
    pub z0: Vec<f64>,
    pub n_steps: usize,
    pub n_replications: usize,
    pub base_seed: u64,
    pub trace_every: usize,
    /// Steps at which the projection statistic is recorded; `n_steps` is always added.
    pub checkpoints: Vec<usize>,
    /// Draws used to estimate the gradient-noise covariance at `z*`.
    pub covariance_samples: usize,
    /// Batches for the long-run covariance under Markov noise.
    pub covariance_batches: usize,
    pub hist_bins: usize,
    pub output_dir: PathBuf,
    pub emit: Vec<EmitKind>,
}

/// Every field optional; the on-disk format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub problem_preset: Option<ProblemSource>,
    pub algorithm: Option<Algorithm>,
    pub schedule: Option<StepSchedule>,
    pub truncation: Option<TruncationPolicy>,
    pub z0: Option<Vec<f64>>,
    pub n_steps: Option<usize>,
    pub n_replications: Option<usize>,
    pub base_seed: Option<u64>,
    pub trace_every: Option<usize>,
    pub checkpoints: Option<Vec<usize>>,
    pub covariance_samples: Option<usize>,
    pub covariance_batches: Option<usize>,
    pub hist_bins: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub emit: Option<Vec<EmitKind>>,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
    pub emit: Option<Vec<EmitKind>>,
}

impl PartialConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SaddleError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.preset {
            self.problem_preset = Some(ProblemSource::Preset(p.clone()));
        }
        if o.seed.is_some() {
            self.base_seed = o.seed;
        }
        if o.replications.is_some() {
            self.n_replications = o.replications;
        }
        if o.steps.is_some() {
            self.n_steps = o.steps;
        }
        if o.out.is_some() {
            self.output_dir.clone_from(&o.out);
        }
        if o.emit.is_some() {
            self.emit.clone_from(&o.emit);
        }
    }

    pub fn resolve(self) -> Result<ExperimentConfig> {
        let problem = self
            .problem_preset
            .ok_or_else(|| SaddleError::Config("no problem_preset given".into()))?;
        let d = defaults_for(&problem)?;
        let algorithm = self.algorithm.unwrap_or(d.algorithm);
        let truncation = match algorithm {
            Algorithm::Tseg => Some(self.truncation.or(d.truncation).unwrap_or_default()),
            _ => {
                if self.truncation.is_some() {
                    return Err(SaddleError::Config(format!(
                        "truncation settings require tseg, algorithm is {algorithm}"
                    )));
                }
                None
            }
        };
        let config = ExperimentConfig {
            problem_preset: problem,
            algorithm,
            schedule: self.schedule.unwrap_or(d.schedule),
            truncation,
            z0: self.z0.unwrap_or(d.z0),
            n_steps: self.n_steps.unwrap_or(d.n_steps),
            n_replications: self.n_replications.unwrap_or(d.n_replications),
            base_seed: self.base_seed.unwrap_or(0),
            trace_every: self.trace_every.unwrap_or(0),
            checkpoints: self.checkpoints.unwrap_or(d.checkpoints),
            covariance_samples: self.covariance_samples.unwrap_or(1_000_000),
            covariance_batches: self.covariance_batches.unwrap_or(10_000),
            hist_bins: self.hist_bins.unwrap_or(40),
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            emit: self.emit.unwrap_or_else(|| vec![EmitKind::Csv, EmitKind::Json]),
        };
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    /// Defaults of a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        PartialConfig {
            problem_preset: Some(ProblemSource::Preset(name.to_string())),
            ..PartialConfig::default()
        }
        .resolve()
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if let Some(t) = &self.truncation {
            t.validate()?;
        }
        let positive = [
            ("n_steps", self.n_steps),
            ("n_replications", self.n_replications),
            ("hist_bins", self.hist_bins.saturating_sub(1)),
            ("covariance_batches", self.covariance_batches.saturating_sub(1)),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SaddleError::Config(format!("{name} is too small")));
            }
        }
        if !self.covariance_samples.is_multiple_of(self.covariance_batches) {
            return Err(SaddleError::Config(
                "covariance_samples must be divisible by covariance_batches".into(),
            ));
        }
        if self.checkpoints.contains(&0) {
            return Err(SaddleError::Config("checkpoints are 1-indexed".into()));
        }
        if self.z0.iter().any(|v| !v.is_finite()) {
            return Err(SaddleError::Config("z0 must be finite".into()));
        }
        Ok(())
    }

    /// Sorted checkpoints not beyond `n_steps`, always ending with `n_steps`.
    pub fn effective_checkpoints(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self
            .checkpoints
            .iter()
            .copied()
            .filter(|c| *c <= self.n_steps)
            .chain(std::iter::once(self.n_steps))
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Canonical TOML text.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SaddleError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        PartialConfig::from_toml(text)?.resolve()
    }

    pub fn wants(&self, kind: EmitKind) -> bool {
        self.emit.contains(&kind)
    }
}
