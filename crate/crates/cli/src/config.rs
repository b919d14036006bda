//! `key = value` configuration files.
//!
//! Keys are CLI flag names without the leading dashes (`top-n`, `p-target`).
//! `[section]` headers group keys for readability and do not namespace them.
//! `#` starts a comment. Flags given on the command line override file values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const KNOWN_KEYS: &[&str] = &[
    // qe
    "alpha",
    "beta",
    "gamma",
    "top-n",
    "bidirectional",
    "bidi-rule",
    "exclude-trial-partner",
    "raw-embeddings",
    "lazy",
    // fusion
    "lambda",
    "normalize",
    // dcf
    "c-miss",
    "c-fa",
    "p-target",
    // sweep
    "alphas",
    "betas",
    "gammas",
    "top-ns",
    "lambdas",
    // synth
    "n-speakers",
    "utts-per-speaker",
    "dimension",
    "between-std",
    "within-std",
    "seed",
    "n-target",
    "n-nontarget",
    "trial-seed",
    // global
    "threads",
    "quiet",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {lineno}: expected `key = value`"))?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("line {lineno}: unknown key {key:?}");
            }
            if let Some((first, _)) = values.get(&key) {
                bail!("line {lineno}: key {key:?} already set on line {first}");
            }
            values.insert(key, (lineno, value.trim().to_string()));
        }
        Ok(Self { values })
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        self.values.get(key)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config line {line}: {key} = {v:?}: {e}"))
            })
            .transpose()
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                other => bail!("config line {line}: {key} = {other:?} is not a boolean"),
            },
        }
    }

    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|(line, v)| {
                v.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| anyhow!("config line {line}: {key}: {s:?}: {e}"))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Command-line value, else file value, else `default`.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn resolve_flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.get_bool(key)?)
    }

    pub fn resolve_list<T>(&self, flag: Option<Vec<T>>, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get_list(key),
        }
    }
}
