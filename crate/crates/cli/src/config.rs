//! Flat `key = value` config files with dotted keys.
//!
//! ```text
//! # comment
//! alpha = 0.05
//! select.methods = gcm,loco
//! regressor.kind = gbm
//! regressor.gbm.rounds = 200
//! ```
//!
//! Keys under `regressor.` go to the regressor spec. Any other key names a
//! flag of the subcommand, optionally prefixed with the subcommand name;
//! keys prefixed with a different subcommand are ignored.

use std::collections::BTreeMap;
use std::path::Path;

use clap::{ArgAction, Command};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("config line {}: expected key = value", i + 1))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(format!("config line {}: bad key \"{key}\"", i + 1));
            }
            let value = value.trim().trim_matches('"').to_string();
            if entries.insert(key.to_string(), value).is_some() {
                return Err(format!("config line {}: duplicate key \"{key}\"", i + 1));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// Regressor keys, with the `regressor.` prefix kept.
    pub fn regressor_entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .filter(|(k, _)| k.starts_with("regressor."))
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Appends `--flag value` for every config entry whose flag is absent from
/// `argv`, so explicit flags win and clap validates everything uniformly.
pub fn merge_into_argv(
    argv: Vec<String>,
    root: &Command,
    config: &ConfigFile,
) -> Result<Vec<String>, String> {
    let Some(sub_name) = argv.get(1).cloned() else {
        return Ok(argv);
    };
    let Some(sub) = root.find_subcommand(&sub_name) else {
        return Ok(argv);
    };
    let subcommands: Vec<String> = root.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let given: Vec<String> = argv
        .iter()
        .skip(2)
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut out = argv;
    for (key, value) in &config.entries {
        if key.starts_with("regressor.") {
            continue;
        }
        let key = match key.split_once('.') {
            Some((prefix, rest)) if prefix == sub_name => rest,
            Some((prefix, _)) if subcommands.iter().any(|s| s == prefix) => continue,
            _ => key.as_str(),
        };
        let flag = key.replace('_', "-");
        if flag == "config" {
            return Err("a config file cannot name another config file".into());
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(flag.as_str()))
            .ok_or_else(|| format!("config key \"{key}\" is not a flag of `{sub_name}`"))?;
        if given.iter().any(|g| *g == flag) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => out.push(format!("--{flag}")),
                "false" | "no" | "0" => {}
                _ => return Err(format!("config key \"{key}\": expected true or false, got \"{value}\"")),
            },
            _ => {
                out.push(format!("--{flag}"));
                out.push(value.clone());
            }
        }
    }
    Ok(out)
}

/// Value of `--config` in `argv`, if any.
pub fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_quotes() {
        let c = ConfigFile::parse("# top\nalpha = 0.1  # trailing\n\nregressor.gbm.rounds=50\nname = \"x\"\n").unwrap();
        assert_eq!(c.entries["alpha"], "0.1");
        assert_eq!(c.entries["regressor.gbm.rounds"], "50");
        assert_eq!(c.entries["name"], "x");
        assert_eq!(c.regressor_entries().count(), 1);
    }

    #[test]
    fn rejects_duplicates_and_missing_equals() {
        assert!(ConfigFile::parse("a = 1\na = 2").is_err());
        assert!(ConfigFile::parse("just words").is_err());
    }
}
