//! TOML task files. Every section is optional and falls back to the core
//! defaults; unknown keys are rejected.

use std::path::Path;

use endonav_core::nav::TaskConfig;

use crate::{io_err, Error, Result};

pub fn parse_config(text: &str) -> Result<TaskConfig> {
    let config: TaskConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<TaskConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        Error::Core(c) => Error::Config(format!("{}: {c}", path.display())),
        other => other,
    })
}
