//! Experiment runner for `symlab-core`: configuration files, the corrector
//! container format, CSV/SVG/JSON artifacts and the consolidated report.

pub mod config;
pub mod container;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod output;
pub mod report;
pub mod run;

pub use error::{LabError, Result};
