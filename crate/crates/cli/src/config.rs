//! Flat INI-style run configuration: `[section]` headers with `key = value`
//! lines. Command-line flags override file values; unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::input(format!(
                    "config line {}: expected `key = value`, got `{raw}`",
                    line_no + 1
                )));
            };
            if current.is_empty() {
                return Err(CliError::input(format!(
                    "config line {}: key outside of any [section]",
                    line_no + 1
                )));
            }
            sections
                .get_mut(&current)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    /// Rejects keys in `section` that the command does not understand.
    pub fn check_known_keys(&self, section: &str, known: &[&str]) -> CliResult<()> {
        if let Some(map) = self.sections.get(section) {
            for key in map.keys() {
                if !known.contains(&key.as_str()) {
                    return Err(CliError::input(format!(
                        "unknown key `{key}` in config section [{section}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|m| m.get(key)).map(|s| s.as_str())
    }

    pub fn get<T: std::str::FromStr>(&self, section: &str, key: &str) -> CliResult<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(text) => text.parse::<T>().map(Some).map_err(|_| {
                CliError::input(format!(
                    "config [{section}] {key} = {text}: cannot parse as {}",
                    std::any::type_name::<T>()
                ))
            }),
        }
    }
}

/// Seed resolution order: explicit flag, config value, `CHOICEFORGE_SEED`,
/// then zero.
pub fn resolve_seed(flag: Option<u64>, config: &RunConfig, section: &str) -> CliResult<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = config.get::<u64>(section, "seed")? {
        return Ok(seed);
    }
    match std::env::var("CHOICEFORGE_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| CliError::input(format!("CHOICEFORGE_SEED={text} is not a valid seed"))),
        Err(_) => Ok(0),
    }
}
