//! Std companion of `endonav-core`: task configuration files, depth/shape/
//! weight file formats, per-tick CSV logs, SVG plots and the experiment
//! runner behind the `endonav` command line.

pub mod config;
pub mod formats;
pub mod logs;
pub mod plot;
pub mod runner;

use std::path::PathBuf;

pub use endonav_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] endonav_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

pub(crate) fn format_err(path: impl Into<PathBuf>, message: impl Into<String>) -> Error {
    Error::Format { path: path.into(), message: message.into() }
}
