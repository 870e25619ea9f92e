//! `key = value` configuration files and value parsers shared by the flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Parsed configuration file; flags given on the command line win.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !allowed.contains(&key) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key '{key}' (allowed: {})",
                    n + 1,
                    allowed.join(", ")
                )));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, allowed)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value, else config value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.raw(key) {
            Some(text) => text
                .parse()
                .map_err(|_| CliError::Usage(format!("config key '{key}': cannot parse '{text}'"))),
            None => Ok(default),
        }
    }

    pub fn pick_with<T>(
        &self,
        flag: Option<&str>,
        key: &str,
        default: &str,
        parse: fn(&str) -> Result<T, String>,
    ) -> Result<T, CliError> {
        let text = flag.or(self.raw(key)).unwrap_or(default);
        parse(text).map_err(|e| CliError::Usage(format!("{key}: {e}")))
    }
}

/// Grid spacing as a decimal or a fraction such as `1/64`.
pub fn parse_spacing(text: &str) -> Result<f64, String> {
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("cannot parse '{text}'"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("cannot parse '{text}'"))?;
            a / b
        }
        None => text.trim().parse().map_err(|_| format!("cannot parse '{text}'"))?,
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(format!("spacing must be positive, got '{text}'"))
    }
}

/// Comma-separated list of reals.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("cannot parse '{p}'")))
        .collect()
}
