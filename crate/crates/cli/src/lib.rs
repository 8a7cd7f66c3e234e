//! Batch driver: experiment configs in, JSON/CSV reports and a run manifest
//! out. Exit codes: 0 every selected check passed, 1 a check failed (or a
//! report would contain a non-finite number), 2 config, I/O or selection
//! errors.

pub mod config;
pub mod diff;
pub mod error;
pub mod run;

pub use config::{load_config, parse_config, Analysis, Construction, ExperimentConfig};
pub use diff::{diff_reports, ReportDiff};
pub use error::CliError;
pub use run::{build_only, check, marginal, resolve_output_dir, sweep, RunManifest};
