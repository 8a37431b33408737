//! Plain-text configuration files.
//!
//! Format: one `key = value` per line, `#` starts a comment, blank lines
//! ignored.  List values are comma-separated.  Every subcommand accepts
//! `--config`; command-line flags override file values.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Keys any subcommand may read; unknown keys are rejected at load time
/// so typos surface instead of silently falling back to defaults.
const KNOWN_KEYS: &[&str] = &[
    "seed",
    "replicates",
    "trials_per_cluster",
    "probs",
    "clusters_per_area",
    "y2",
    "sigma2_y2",
    "weights",
    "methods",
    "chains",
    "warmup",
    "draws",
    "keep",
    "target",
    "rejection_target",
    "ess_target",
    "increment_draws",
    "max_increments",
    "pool_draws",
    "shift_variance",
    "acceptance_floor",
    "lambda",
    "max_rhat",
    "min_ess",
    "parallel",
    "progress",
    "full_grid",
    "study_priors",
];

/// Parsed key/value pairs from one config file.
#[derive(Debug, Default)]
pub struct Config {
    values: HashMap<String, String>,
}

impl Config {
    /// Empty configuration: every lookup falls through to the flag or the
    /// built-in default.
    pub fn empty() -> Self {
        Config::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Config::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`, got {raw:?}", idx + 1);
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key {key:?}", idx + 1);
            }
            if values
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                bail!("line {}: duplicate key {key:?}", idx + 1);
            }
        }
        Ok(Config { values })
    }

    /// Typed scalar lookup; `Ok(None)` when the key is absent.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key} = {raw:?}: {e}")),
        }
    }

    /// Typed comma-separated list lookup.
    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|part| {
                    let part = part.trim();
                    part.parse()
                        .map_err(|e| anyhow!("config key {key}, item {part:?}: {e}"))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// First of: command-line flag, config value, built-in default.
pub fn resolve<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
