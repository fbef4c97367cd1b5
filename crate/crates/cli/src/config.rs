//! Strict `key=value` parameters for subcommands.
//!
//! Every subcommand declares a schema of known keys with defaults. Values
//! come from an optional config file (one `key = value` per line, `#`
//! comments) and from trailing `key=value` arguments, later ones winning.
//! Unknown keys and unparsable values are usage errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{key}`; valid keys: {valid}")]
    UnknownKey { key: String, valid: String },
    #[error("expected key=value, got `{0}`")]
    Malformed(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("cannot read config file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One schema entry. An empty default marks an optional key with no value.
#[derive(Clone, Copy, Debug)]
pub struct Param {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn param(key: &'static str, default: &'static str, help: &'static str) -> Param {
    Param { key, default, help }
}

#[derive(Clone, Debug)]
pub struct Params {
    schema: &'static [Param],
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn new(schema: &'static [Param]) -> Self {
        let values = schema
            .iter()
            .filter(|p| !p.default.is_empty())
            .map(|p| (p.key.to_string(), p.default.to_string()))
            .collect();
        Params { schema, values }
    }

    /// Defaults overridden by `file` (if any) and then by `overrides`.
    pub fn load(
        schema: &'static [Param],
        file: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let mut params = Params::new(schema);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?;
            for line in text.lines() {
                let line = line.split('#').next().unwrap_or("").trim();
                if !line.is_empty() {
                    params.set_pair(line)?;
                }
            }
        }
        for pair in overrides {
            params.set_pair(pair)?;
        }
        Ok(params)
    }

    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError::Malformed(pair.to_string()))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !self.schema.iter().any(|p| p.key == key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                valid: self.schema.iter().map(|p| p.key).collect::<Vec<_>>().join(", "),
            });
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(self.schema.iter().any(|p| p.key == key), "key {key} not in schema");
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get_opt(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn get_opt<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    /// Comma-separated list.
    pub fn get_list<T>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.raw(key).ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::BadValue {
                    key: key.to_string(),
                    value: raw.to_string(),
                    reason: e.to_string(),
                })
            })
            .collect()
    }

    pub fn bad(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            key: key.to_string(),
            value: self.raw(key).unwrap_or("").to_string(),
            reason: reason.into(),
        }
    }

    /// The resolved values, for run summaries.
    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn schema(&self) -> &'static [Param] {
        self.schema
    }
}

/// The schema as aligned text for `--help`-style listings.
pub fn describe(schema: &[Param]) -> String {
    let width = schema.iter().map(|p| p.key.len()).max().unwrap_or(0);
    schema
        .iter()
        .map(|p| {
            let default = if p.default.is_empty() { "-" } else { p.default };
            format!("  {:width$}  {} (default: {default})", p.key, p.help)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &[Param] = &[
        param("draws", "10", "number of draws"),
        param("theta", "0", "decay rate"),
        param("cnf", "", "formula path"),
    ];

    #[test]
    fn defaults_and_overrides() {
        let p = Params::load(SCHEMA, None, &["theta=2.5".into()]).unwrap();
        assert_eq!(p.get::<usize>("draws").unwrap(), 10);
        assert_eq!(p.get::<f64>("theta").unwrap(), 2.5);
        assert!(p.get_opt::<String>("cnf").unwrap().is_none());
        assert!(matches!(p.get::<String>("cnf"), Err(ConfigError::Missing(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            Params::load(SCHEMA, None, &["tehta=1".into()]),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(matches!(
            Params::load(SCHEMA, None, &["theta".into()]),
            Err(ConfigError::Malformed(_))
        ));
    }

    #[test]
    fn bad_value_reported() {
        let p = Params::load(SCHEMA, None, &["draws=ten".into()]).unwrap();
        assert!(matches!(p.get::<usize>("draws"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn lists() {
        let mut p = Params::new(SCHEMA);
        p.set("theta", "0, 0.5,3").unwrap();
        assert_eq!(p.get_list::<f64>("theta").unwrap(), vec![0.0, 0.5, 3.0]);
    }
}
