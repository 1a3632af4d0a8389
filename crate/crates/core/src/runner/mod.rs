//! Declarative experiment runner: config parsing, dispatch, result tables
//! and the acceptance suite.

pub mod config;
pub mod experiments;
pub mod results;
pub mod shipped;
pub mod verify;

pub use config::{parse_config, ExperimentConfig, ExperimentKind, LoadedConfig, Profile};
pub use experiments::{run_experiment, DEGRADED_CAPPED_FRACTION};
pub use results::{Format, ResultRow, ResultTable};
