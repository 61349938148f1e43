//! Parameter resolution: command-line flag, then `--config` file, then default.
//!
//! Every resolved value is recorded so the run can write a manifest that,
//! passed back through `--config`, reproduces the same outputs.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use smvslab::kv::KeyValues;

pub const SEED_ENV: &str = "SMVSLAB_SEED";

/// A problem with how the tool was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub struct Settings {
    file: KeyValues,
    resolved: KeyValues,
}

impl Settings {
    pub fn new(command: &str, config: Option<&Path>) -> Result<Self> {
        let file = match config {
            Some(p) => KeyValues::read(p).with_context(|| format!("reading config {}", p.display()))?,
            None => KeyValues::new(),
        };
        let mut resolved = KeyValues::new();
        resolved.set("command", command);
        Ok(Self { file, resolved })
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| UsageError(format!("config value for {key} is invalid: {raw:?}")).into()),
        }
    }

    pub fn value<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.resolved.set(key, &v);
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.resolved.set(key, v);
        }
        Ok(v)
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.optional_path(key, flag)?
            .ok_or_else(|| UsageError(format!("--{key} is required (flag or config entry)")).into())
    }

    pub fn optional_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let v = flag.or_else(|| self.file.get(key).map(PathBuf::from));
        if let Some(p) = &v {
            self.resolved.set(key, p.display());
        }
        Ok(v)
    }

    /// Seed precedence: flag, config file, `SMVSLAB_SEED`, then 0.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64> {
        let fallback = match std::env::var(SEED_ENV) {
            Ok(raw) => raw
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("{SEED_ENV} must be an unsigned integer, got {raw:?}")))?,
            Err(_) => 0,
        };
        self.value("seed", flag, fallback)
    }

    /// Records a value that is derived rather than chosen (e.g. a stage input
    /// inside `pipeline`).
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.resolved.set(key, value);
    }

    pub fn manifest(&self) -> &KeyValues {
        &self.resolved
    }
}
