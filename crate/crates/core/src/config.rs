//! Flat `key=value` text files used for training configs and blob specs.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! Whitespace around keys and values is trimmed.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parsed pairs, consumed key by key so leftovers can be reported as unknown.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { entries })
    }

    /// Parses a comma-separated inline form such as `dim=32,seed=7`.
    pub fn parse_inline(text: &str) -> Result<Self, ConfigError> {
        Self::parse(&text.replace(',', "\n"))
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Removes and parses `key`, returning `None` when absent.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(value) => value.parse().map(Some).map_err(|e: T::Err| ConfigError::BadValue {
                key: key.to_string(),
                reason: e.to_string(),
                value,
            }),
        }
    }

    pub fn take_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(value) => value
                .split(',')
                .map(|item| item.trim().parse::<T>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|e| ConfigError::BadValue {
                    key: key.to_string(),
                    reason: e.to_string(),
                    value,
                }),
        }
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_keys().next() {
            Some(key) => Err(ConfigError::UnknownKey(key)),
            None => Ok(()),
        }
    }
}

/// Formats a float so that parsing it back yields the identical value.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn format_list<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
