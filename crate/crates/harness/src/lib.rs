//! Seeded Monte Carlo harness for TL-GAMP experiments: config files,
//! single trials, parameter sweeps and their CSV and JSON outputs.

pub mod config;
pub mod error;
pub mod manifest;
pub mod seed;
pub mod sweep;
pub mod trial;

pub use config::{AodMode, Estimator, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use manifest::RunManifest;
pub use seed::trial_seed;
pub use sweep::{sweep, Axis, SweepResult, SweepRow, CSV_HEADER};
pub use trial::{
    run_trial, run_trial_detailed, EstimatorOutcome, PathDetail, TrialDetail, TrialResult,
};
