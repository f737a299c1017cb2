//! Experiment orchestration for umspace: machine-readable reports, path
//! CSVs, Monte-Carlo experiments against closed forms, and the acceptance
//! battery.

pub mod acceptance;
pub mod experiments;
pub mod path;
pub mod report;

pub use report::{Check, ExperimentReport, ReportRow, Status};
