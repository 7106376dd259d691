//! Profiles, run configuration, scenario assembly and result files.
//!
//! File formats are plain text: two-column CSV profiles with a
//! `wind_mwh,load_mw` header, a TOML run configuration with units in the key
//! names, CSV result tables and JSON summaries.

mod config;
mod profiles;
mod results;
mod scenario;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    CapitalSection, DiscountSection, GeneratorSection, GridSection, HorizonSection, LoadSection, OutputSection,
    RunConfig, StorageSection,
};
pub use profiles::{
    load_profiles, synth_profiles, write_profiles, AnnualProfiles, SynthParams, HOURS_PER_LEAP_YEAR, HOURS_PER_YEAR,
    PROFILE_HEADER,
};
pub use results::{
    read_schedule, result_rows, schedule_rows, write_dispatch, write_results, write_schedule, write_sweep_bg, Manifest,
    ResultSet, ScheduleRow, SweepBgRow, SCHEDULE_HEADER,
};
pub use scenario::{build_periods, build_scenario, desk_scale, representative_day, synth_scenario, Scenario};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("load_profiles: {}: line {row}, column {col}: {msg}", path.display())]
    Parse { path: PathBuf, row: u64, col: usize, msg: String },
    #[error("load_profiles: {}: expected {expected} rows, found {found}", path.display())]
    LengthMismatch { path: PathBuf, expected: usize, found: usize },
    #[error("load_profiles: {}: negative value {value} at line {row}, column {col}", path.display())]
    NegativeValue { path: PathBuf, row: u64, col: usize, value: f64 },
    #[error("RunConfig: {}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },
    #[error("build_scenario: {0}")]
    Scenario(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[cfg(test)]
mod tests;
