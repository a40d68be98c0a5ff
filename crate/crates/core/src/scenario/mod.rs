//! Declarative scenarios: JSON configs, built-in presets, execution and output.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;

pub use config::*;
pub use output::{format_float, write_outputs, Manifest};
pub use presets::{list_presets, preset};
pub use run::{run_scenario, CheckResult, RunOptions, ScenarioRun, Table};
