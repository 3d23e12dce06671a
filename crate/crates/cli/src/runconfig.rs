//! Resolved-config persistence: flags override config-file values, and the
//! fully resolved settings are written next to the outputs so any run can be
//! reproduced from its own artifacts.

use ppr_core::error::Error;
use ppr_core::Result;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::Path;

/// Loads a partial config (all fields optional) from JSON, if given.
pub fn load_partial<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let data = std::fs::read_to_string(p).map_err(Error::io(p))?;
            serde_json::from_str(&data).map_err(|e| {
                Error::Config(format!("config file {}: {e}", p.display()))
            })
        }
    }
}

pub fn persist<C: Serialize>(dir: &Path, resolved: &C) -> Result<()> {
    let path = dir.join("resolved_config.json");
    let json = serde_json::to_string_pretty(resolved)?;
    std::fs::write(&path, json).map_err(Error::io(path))
}

/// Flag beats file beats default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
