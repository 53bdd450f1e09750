//! Flat key=value configuration files, one pair per line, `#` comments.
//! Command-line flags always win over config keys; a key is consulted
//! only when the matching flag is absent.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Ctx {
    map: HashMap<String, String>,
}

impl Ctx {
    pub fn load(path: Option<&Path>) -> Result<Ctx, CliError> {
        let Some(path) = path else {
            return Ok(Ctx::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {path:?}: {e}")))?;
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Validation(format!(
                    "config line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Ctx { map })
    }

    /// Flag value if present, else the config value parsed as T.
    pub fn opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                CliError::Validation(format!("config key {key}: bad value {raw:?}: {e}"))
            }),
        }
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.opt(flag, key)?.ok_or_else(|| {
            CliError::Validation(format!("missing required parameter: {key}"))
        })
    }

    pub fn opt_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn require_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        if let Some(p) = flag {
            return Ok(p);
        }
        self.map.get(key).map(PathBuf::from).ok_or_else(|| {
            CliError::Validation(format!("missing required parameter: {key}"))
        })
    }

    pub fn opt_path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.map.get(key).map(PathBuf::from))
    }
}

/// "a,b,c" -> parsed list; whitespace around items ignored.
pub fn parse_comma_list<T>(raw: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| CliError::Validation(format!("bad {what} item {s:?}: {e}")))
        })
        .collect()
}

/// "0:0.05,0.05:0.2" -> [(0.0, 0.05), (0.05, 0.2)].
pub fn parse_bins(raw: &str) -> Result<Vec<(f64, f64)>, CliError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (lo, hi) = pair.split_once(':').ok_or_else(|| {
                CliError::Validation(format!("bad bin {pair:?}: expected lo:hi"))
            })?;
            let lo: f64 = lo.trim().parse().map_err(|_| {
                CliError::Validation(format!("bad bin lower bound {lo:?}"))
            })?;
            let hi: f64 = hi.trim().parse().map_err(|_| {
                CliError::Validation(format!("bad bin upper bound {hi:?}"))
            })?;
            if lo >= hi {
                return Err(CliError::Validation(format!("empty bin {pair:?}")));
            }
            Ok((lo, hi))
        })
        .collect()
}
