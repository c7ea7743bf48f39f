//! Flat `key = value` settings: config file first, then `--key value` flags.

use std::path::Path;

use anyhow::Result;
use phasegen::cvnn::checkpoint::parse_pairs;

use crate::Usage;

#[derive(Clone, Debug, Default)]
pub struct Settings {
    pairs: Vec<(String, String)>,
}

impl Settings {
    pub fn load(config: Option<&Path>, flags: &[String], seed: Option<u64>) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path).map_err(|e| Usage::new(format!("{}: {e}", path.display())))?;
            let pairs = parse_pairs(&text).map_err(|(line, msg)| Usage::new(format!("{}:{line}: {msg}", path.display())))?;
            for (k, v) in pairs {
                s.set(&k, &v);
            }
        }
        let mut it = flags.iter();
        while let Some(flag) = it.next() {
            let Some(key) = flag.strip_prefix("--") else {
                return Err(Usage::new(format!("expected `--key value`, got `{flag}`")).into());
            };
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| Usage::new(format!("missing value for `--{key}`")))?;
                    (key.to_string(), v.clone())
                }
            };
            if key.is_empty() {
                return Err(Usage::new("empty setting name").into());
            }
            s.set(&key.replace('-', "_"), &value);
        }
        if let Some(seed) = seed {
            s.set("seed", &seed.to_string());
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        match self.pairs.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.pairs.push((key.to_string(), value.to_string())),
        }
    }

    /// Fails on any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.pairs {
            if !allowed.contains(&k.as_str()) {
                return Err(Usage::new(format!("unknown setting `{k}` (allowed: {})", allowed.join(", "))).into());
            }
        }
        Ok(())
    }

    /// Removes and returns `key`.
    pub fn take(&mut self, key: &str) -> Option<String> {
        let i = self.pairs.iter().position(|(k, _)| k == key)?;
        Some(self.pairs.remove(i).1)
    }

    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Usage::new(format!("invalid value `{v}` for `{key}`")).into()),
        }
    }

    #[cfg(test)]
    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }
}
