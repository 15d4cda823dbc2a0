//! Flat `key = value` run configuration with `#` comments.
//!
//! Each command declares which keys it accepts; unknown keys are rejected and
//! all missing required keys are reported in one aggregated error.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "config line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(CliError::config(format!("config line {}: empty key", lineno + 1)));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(CliError::config(format!("config line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Override or insert a value (used for CLI flags that shadow the file).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Echo of every key/value pair, for run manifests.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// Reject keys outside `allowed` and report every missing `required` key
    /// at once.
    pub fn validate_keys(&self, allowed: &[&str], required: &[&str]) -> Result<()> {
        let mut unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !allowed.contains(&k.as_str()))
            .map(|k| k.as_str())
            .collect();
        if !unknown.is_empty() {
            unknown.sort_unstable();
            return Err(CliError::config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let missing: Vec<&str> =
            required.iter().copied().filter(|k| !self.values.contains_key(*k)).collect();
        if !missing.is_empty() {
            return Err(CliError::config(format!(
                "missing required config keys: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| CliError::config(format!("missing config key '{key}'")))
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn parse_with<T: std::str::FromStr>(&self, key: &str, value: &str) -> Result<T> {
        value.parse().map_err(|_| {
            CliError::config(format!(
                "config key '{key}': cannot parse '{value}' as {}",
                std::any::type_name::<T>()
            ))
        })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let value = self.get_str(key)?;
        self.parse_with(key, value)
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.opt_str(key) {
            Some(value) => self.parse_with(key, value),
            None => Ok(default),
        }
    }

    pub fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.opt_str(key) {
            Some(value) => Ok(Some(self.parse_with(key, value)?)),
            None => Ok(None),
        }
    }

    pub fn get_bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.opt_str(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => {
                Err(CliError::config(format!("config key '{key}': expected true/false, got '{other}'")))
            }
        }
    }
}
