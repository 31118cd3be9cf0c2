//! Library side of the `ilc` command: input parsing, configuration,
//! analyses and their reports.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;

pub use config::AnalysisConfig;
pub use error::CliError;
pub use ingest::Input;
pub use report::{AnalysisReport, Outputs};
