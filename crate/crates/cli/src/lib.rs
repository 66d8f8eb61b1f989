//! Experiment harness: config files, multi-seed orchestration, the
//! verification suite, sweeps and result emission.

pub mod config;
pub mod error;
pub mod runner;
pub mod sweep;
pub mod verify;

pub use config::{ExperimentConfig, Knobs, Mode, Variant};
pub use error::{HarnessError, Result, EXIT_CONFIG_ERROR, EXIT_SUCCESS, EXIT_VERIFICATION_FAILURE};
pub use runner::{aggregate, emit_results, run_bundle, run_config, Format, ResultBundle};
pub use sweep::sweep;
pub use verify::{verify_suite, VerifyReport};
