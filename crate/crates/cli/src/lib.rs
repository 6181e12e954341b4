//! Scenario files in, solver and simulator results out.

pub mod commands;
pub mod scenario;

use std::path::Path;

pub use commands::{run_command, CliError, Outcome, RunOptions, RunRecord, SweepSolver, Verb};
pub use scenario::{parse_scenario, Scenario, ScenarioError};

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_scenario(&text)?)
}
