//! Resolved run settings.
//!
//! Settings are a flat map of option names (the long flag names without
//! dashes) to string values. Values are layered: built-in defaults, then the
//! config file, then command-line flags. A config file holds `key = value`
//! lines; `#` starts a comment, except that `#@ key = value` lines are read
//! as settings too, which is the header format every output file carries.
//! A JSON output file is also accepted: its `config` object is used.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn with_defaults(defaults: &[(&str, &str)]) -> Self {
        let values = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { values }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
            .ok_or_else(|| CliError::Usage(format!("missing setting '{key}'")))
    }

    pub fn parse<T>(&self, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|e| CliError::Usage(format!("bad value '{raw}' for '{key}': {e}")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<String>, CliError> {
        Ok(self
            .str(key)?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect())
    }

    /// Overlays `other`; every key must already be known.
    pub fn merge(&mut self, other: &Settings, source: &str) -> Result<(), CliError> {
        for (k, v) in &other.values {
            if !self.values.contains_key(k) {
                return Err(CliError::Usage(format!("unknown option '{k}' in {source}")));
            }
            self.values.insert(k.clone(), v.clone());
        }
        Ok(())
    }

    /// `#@ key = value` lines, in key order.
    pub fn header(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("#@ {k} = {v}\n"))
            .collect()
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            return Self::from_json(text);
        }
        // An output file: only the header counts, the rest is data.
        let header_only = text.lines().any(|l| l.trim_start().starts_with("#@"));
        let mut out = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            let body = if let Some(rest) = line.strip_prefix("#@") {
                rest
            } else if header_only || line.is_empty() || line.starts_with('#') {
                continue;
            } else {
                line
            };
            let (k, v) = body.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", n + 1))
            })?;
            out.set(k.trim(), v.trim());
        }
        Ok(out)
    }

    fn from_json(text: &str) -> Result<Self, CliError> {
        let doc: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("config JSON: {e}")))?;
        let obj = doc
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| CliError::Usage("config JSON has no 'config' object".into()))?;
        let mut out = Settings::default();
        for (k, v) in obj {
            let v = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.set(k, v);
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_and_header_lines() {
        let s = Settings::from_text("# comment\nclients = 12\n\nseed=4\n").unwrap();
        assert_eq!(s.raw("clients"), Some("12"));
        assert_eq!(s.raw("seed"), Some("4"));
        let err = Settings::from_text("clients = 12\nround,loss\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn output_file_reads_header_only() {
        let s = Settings::from_text("#@ seed = 4\n# note\nround,loss\n1,0.5\n").unwrap();
        assert_eq!(s.as_map().len(), 1);
        assert_eq!(s.raw("seed"), Some("4"));
    }

    #[test]
    fn json_config_object() {
        let s = Settings::from_text(r#"{"config": {"trials": "5", "seed": 3}, "results": []}"#).unwrap();
        assert_eq!(s.raw("trials"), Some("5"));
        assert_eq!(s.raw("seed"), Some("3"));
    }

    #[test]
    fn merge_rejects_unknown_keys() {
        let mut base = Settings::with_defaults(&[("seed", "0")]);
        let over = Settings::from_text("seed = 9").unwrap();
        base.merge(&over, "test").unwrap();
        assert_eq!(base.raw("seed"), Some("9"));
        let bad = Settings::from_text("sede = 9").unwrap();
        assert!(base.merge(&bad, "test").is_err());
    }

    #[test]
    fn header_round_trip() {
        let mut s = Settings::with_defaults(&[("a", "1"), ("b", "x,y")]);
        s.set("c", "1e-3:1e2:2");
        assert_eq!(Settings::from_text(&s.header()).unwrap(), s);
    }
}
