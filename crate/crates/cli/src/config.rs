//! Flat `section.key=value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

/// Every key a config file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "model.kind",
    "model.d",
    "model.y0",
    "model.sigma",
    "model.r",
    "model.delta",
    "model.strike",
    "model.maturity",
    "model.dates",
    "model.tree",
    "training.seed",
    "training.basis",
    "training.itm_only",
    "rules.a.kind",
    "rules.a.training_paths",
    "rules.a.lookahead_order",
    "rules.a.sigma",
    "rules.a.shift",
    "rules.a.mark",
    "rules.b.kind",
    "rules.b.training_paths",
    "rules.b.lookahead_order",
    "rules.b.sigma",
    "rules.b.shift",
    "rules.b.mark",
    "pilot.trunks",
    "pilot.replications",
    "estimate.trunks",
    "estimate.replications",
    "estimate.budget",
    "oracle.trunks",
    "oracle.replications",
    "study.offsets",
    "study.training_paths",
    "study.testing_trunks",
    "study.reference_paths",
    "qcv.budget",
    "qcv.pilot_paths_a",
    "qcv.pilot_paths_b",
    "qcv.replications",
    "multilevel.ladder",
    "multilevel.budget",
    "multilevel.pilot_base_paths",
    "multilevel.pilot_fine_paths",
    "vprofile.v1",
    "vprofile.v2",
    "vprofile.rho1",
    "vprofile.rho2",
    "vprofile.r_min",
    "vprofile.r_max",
    "vprofile.points",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    /// Parses `key=value` lines. Blank lines and lines starting with `#`
    /// are ignored; a key may appear once.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected key=value, got `{line}`", n + 1));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return err(format!("line {}: unknown config key `{key}`", n + 1));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return err(format!("line {}: duplicate config key `{key}`", n + 1));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KNOWN_KEYS.contains(&key));
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError(format!("bad value for `{key}`: `{v}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .map_err(|_| ConfigError(format!("bad item `{}` in `{key}`", item.trim())))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// One `key=value` line per entry, sorted by key.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
