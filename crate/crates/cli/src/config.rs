//! `key = value` run configuration files.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored. Keys
//! are the long flag names without the leading dashes (`min-papers = 50`);
//! boolean switches take `true` or `false`. A flag given on the command line
//! wins over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use authattr::Error;

pub const KEYS: [&str; 27] = [
    "corpus",
    "out",
    "dataset",
    "checkpoint",
    "manuscript",
    "min-papers",
    "trim",
    "chunked",
    "seed",
    "test-ratio",
    "workers",
    "encoder",
    "encoder-dim",
    "sidecar-endpoint",
    "eps",
    "min-pts",
    "min-count",
    "mode",
    "lr",
    "epochs",
    "batch-size",
    "normalize-hist",
    "resume",
    "ratio",
    "top-k",
    "first-chunk-only",
    "authors",
];

#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    source: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, Error> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("{source}:{}", n + 1), "expected `key = value`"))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::config(key, format!("unknown setting in {source}")));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::config(key, format!("set twice in {source}")));
            }
        }
        Ok(Self {
            values,
            source: source.to_string(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse `{v}` from {}", self.source))),
        }
    }

    /// Flag value, else file value, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Error> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// A switch is on when given on the command line or set true in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, Error> {
        Ok(flag || self.get::<bool>(key)?.unwrap_or(false))
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, Error> {
        self.pick(flag, key)?
            .ok_or_else(|| Error::config(key, format!("required; pass --{key} or set it in the config file")))
    }
}
