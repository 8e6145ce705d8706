//! Stochastic extra-gradient (SEG), truncated SEG (TSEG) and SGDA for
//! stochastic saddle-point problems, together with the Monte Carlo machinery
//! used to check almost-sure convergence and the Polyak-Ruppert central limit
//! theorem empirically.
//!
//! The crate is organised bottom-up:
//!
//! * [`point`]: decision points, gradient samples, step schedules and the
//!   [`SaddleProblem`] abstraction.
//! * [`noise`]: seeded data-sampling kernels (i.i.d., the state-dependent
//!   AR(1) demand chain and the ramp kernel used for the SGDA divergence
//!   example).
//! * [`optim`]: SGDA, SEG and TSEG step functions and the run driver.
//! * [`models`]: concrete problems (EV-charging game, ramp example, linear fields).
//! * [`diagnostics`]: Jacobians, noise covariances, batch means, KS tests.
//! * [`harness`]: configuration, presets, replication runner and file output.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod models;
pub mod noise;
pub mod optim;
pub mod point;
pub mod rng;

pub use error::{Result, SaddleError};
pub use noise::{Kernel, KernelState};
pub use optim::{Algorithm, RunOptions, RunRecord, TruncationPolicy, TruncationState};
pub use point::{DecisionPoint, GradientSample, SaddleProblem, StepSchedule};
