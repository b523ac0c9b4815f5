//! Simulation lab for joint continuous and grid maxima of multivariate
//! stationary Gaussian processes.

pub mod config;
pub mod io;
pub mod maxima;
pub mod pickands;
pub mod sampler;
pub mod verify;

pub use config::{ConfigError, ExperimentConfig};
pub use verify::{run_experiment, Experiment, ExperimentReport, Target, Verdict, VerifyError};
