//! Files, configuration and orchestration around `greenfl-core`.
//!
//! The core crate does the simulation; this crate reads TOML configs with
//! dotted command-line overrides, fans runs out over seeds, and writes the
//! CSV and JSON artifacts described in the README.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod report;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] greenfl_core::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
