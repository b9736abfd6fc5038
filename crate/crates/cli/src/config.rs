//! Flat `key = value` run configuration. Command-line flags win over file
//! values, which win over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sli_core::io::read_key_values;

const KNOWN_KEYS: &[&str] = &[
    "kernel", "k", "seed", "threads", "out", "kind", "n", "sigma", "nu", "xi", "train", "valid",
    "noise", "noise_abs", "data", "model", "query", "grid", "init", "lower", "upper", "max_iters",
    "rel_tol", "multistart", "max_n", "loo",
];

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let values = read_key_values(path).with_context(|| format!("reading config {}", path.display()))?;
        if let Some(bad) = values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            bail!("config {}: unknown key {bad:?}", path.display());
        }
        Ok(Config { values })
    }

    /// Flag value if given, else the parsed config entry.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key:?}: cannot parse {raw:?}: {e}")),
        }
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| anyhow!("missing --{} (or `{key}` in the config file)", key.replace('_', "-")))
    }
}

/// Three comma-separated reals, e.g. `10,25,3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triple(pub [f64; 3]);

impl FromStr for Triple {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected three comma-separated numbers, got {s:?}"));
        }
        let mut out = [0.0; 3];
        for (o, p) in out.iter_mut().zip(&parts) {
            *o = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
        }
        Ok(Triple(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "k = 3\n# comment\nkernel = gaussian\n").unwrap();
        let c = Config::load(Some(&path)).unwrap();
        assert_eq!(c.or(None, "k", 2usize).unwrap(), 3);
        assert_eq!(c.or(Some(5), "k", 2usize).unwrap(), 5);
        assert_eq!(c.or(None, "multistart", 0usize).unwrap(), 0);
        assert!(c.require::<String>(None, "data").is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "kernal = quadratic\n").unwrap();
        assert!(Config::load(Some(&path)).is_err());
    }

    #[test]
    fn triple_parses() {
        assert_eq!("10, 25,3".parse::<Triple>().unwrap(), Triple([10.0, 25.0, 3.0]));
        assert!("1,2".parse::<Triple>().is_err());
    }
}
