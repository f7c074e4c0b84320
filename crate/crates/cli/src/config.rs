//! Flat `key=value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Parses one `key=value` per line. Blank lines and lines starting with
    /// `#` are skipped.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.apply_override(line)
                .map_err(|_| CliError::Usage(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override; later values win.
    pub fn apply_override(&mut self, item: &str) -> CliResult<()> {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got '{item}'")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::Usage(format!("empty key in '{item}'")));
        }
        self.values.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Fails on the first key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(CliError::Usage(format!(
                "unknown key '{k}'; valid keys: {}",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("cannot parse {key}={v}"))),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str, default: &[T]) -> CliResult<Vec<T>>
    where
        T: Clone,
    {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("cannot parse '{s}' in {key}={v}")))
                })
                .collect(),
        }
    }
}
