//! Flag > config file > default resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))?;
        cfg.path = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            let key = k.trim().replace('_', "-");
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(format!("line {}: duplicate key `{key}`", i + 1));
            }
        }
        Ok(ConfigFile { path: None, values })
    }
}

/// Resolves one command's parameters and remembers what was used.
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    used: BTreeSet<String>,
    pub resolved: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Resolver {
            file,
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        }
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.values.get(key) {
                Some(s) => Some(
                    s.parse::<T>()
                        .map_err(|e| CliError::Config(format!("config key `{key}`: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.optional(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Config(format!("missing required parameter --{key}")))
    }

    /// Positive finite number.
    pub fn positive(&mut self, key: &str, flag: Option<f64>, default: Option<f64>) -> Result<f64, CliError> {
        let v = match default {
            Some(d) => self.get(key, flag, d)?,
            None => self.required(key, flag)?,
        };
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(CliError::Config(format!("--{key} must be positive, got {v}")))
        }
    }

    /// Rejects config keys this command never asked for.
    pub fn finish(self) -> Result<BTreeMap<String, String>, CliError> {
        let unknown: Vec<&String> = self.file.values.keys().filter(|k| !self.used.contains(*k)).collect();
        if let Some(k) = unknown.first() {
            return Err(CliError::Config(format!("unknown config key `{k}`")));
        }
        Ok(self.resolved)
    }
}
