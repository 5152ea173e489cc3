//! Flat `key = value` config files and flag/config/default resolution.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

/// Parsed config file; keys mirror long flag names without the dashes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!("config line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim().trim_start_matches("--").to_string();
            let value = value.trim().trim_matches('"').to_string();
            if key.is_empty() {
                return Err(CliError::Validation(format!("config line {}: empty key", lineno + 1)));
            }
            values.insert(key, value);
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `flag`, else the config value under `key`, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Validation(format!("config key `{key}` = `{raw}`: {e}"))),
            None => Ok(default),
        }
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key, None)?
            .ok_or_else(|| CliError::Validation(format!("missing required --{key} (flag or config key)")))
    }

    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key, Some(default))?.expect("default supplied"))
    }
}
