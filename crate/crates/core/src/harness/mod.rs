//! Experiment configuration, built-in presets, the replication runner and
//! file output.

pub mod config;
pub mod emit;
pub mod experiment;
pub mod presets;

pub use config::{EmitKind, ExperimentConfig, Overrides, PartialConfig};
pub use experiment::{
    clt_check, divergence_demo, run_experiment, DivergenceConfig, DivergenceOutcome,
    ExperimentOutcome, ReplicationOutcome, ReplicationSummary,
};
pub use presets::{build_problem, ProblemSource, PRESET_NAMES};
