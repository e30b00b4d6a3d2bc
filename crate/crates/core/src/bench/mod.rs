//! Experiment harness: reference oracles, CSV traces and config-driven runs.

pub mod config;
pub mod oracle;
pub mod trace;

pub use config::{run_experiment, Algorithm, ExperimentConfig, ExperimentOutcome};
pub use oracle::{oracle_allocation, oracle_dykstra, OracleSolution};
pub use trace::{read_trace, write_trace, TraceRow};
