//! Batch driver: reads problem files, runs one library operation per file and
//! writes JSON or text reports.
//!
//! Exit status: 0 on success (including obstructions), 1 on other computation
//! failures, 2 on unreadable or schema-invalid input, 3 when precision runs out.

pub mod error;
pub mod files;
pub mod jobs;
pub mod report;

pub use error::CliError;
pub use files::{canonicalize, parse_file, ProblemFile};
pub use jobs::{run_job, Command, JobOptions, Report, Status};
