//! Library side of the `gengap` command: measure dispatch, report types and
//! the subcommand implementations, reusable from tests.

pub mod args;
pub mod commands;
pub mod measures;
pub mod report;

pub use args::{run_from_args, Cli, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE};
pub use commands::{run_all, run_gen_zoo, run_measure, run_score, score_entries, with_workers};
pub use measures::{compute_measures, MeasureName, MeasureOutcome, MeasureSettings};
