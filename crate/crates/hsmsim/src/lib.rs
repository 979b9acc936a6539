//! Scenario loading, execution and CSV output for the `hsmsim-core` models.

pub mod checks;
pub mod error;
pub mod output;
pub mod runner;
pub mod scenario;

pub use checks::{check_result, Check, Status};
pub use error::{ModelError, SimError};
pub use output::{write_csv, write_rows, HEADER};
pub use runner::{run_scenario, run_suite, ResultRow, ScenarioResult};
pub use scenario::{canned_scenario, canned_suite, load_scenario, parse_override, Kind, Scenario, SweepValue};
