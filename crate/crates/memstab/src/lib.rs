//! Experiment front end for `memstab-core`: configurations, named presets,
//! CSV/JSON outputs and convergence tables. The `memstab` binary wraps these.

pub mod config;
pub mod convergence;
mod error;
pub mod experiment;
pub mod export;
pub mod presets;

pub use config::ExperimentConfig;
pub use convergence::{convergence_report, ConvergenceReport};
pub use error::{AppError, Result};
pub use experiment::{execute, simulate, RunSummary};
pub use presets::{preset, PRESETS};
