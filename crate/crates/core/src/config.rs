//! Flat `key = value` files. Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key/value pairs with the line each key came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                reason: format!("expected key=value, found {line:?}"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    reason: "empty key".into(),
                });
            }
            if entries
                .insert(key.clone(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config {
                    line: line_no,
                    reason: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries
            .insert(key.to_string(), (0, value.to_string()));
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, value)) => value.parse::<T>().map(Some).map_err(|e| Error::Config {
                line: *line,
                reason: format!("{key}: {e}"),
            }),
        }
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse_opt(key)?.ok_or_else(|| Error::Config {
            line: 0,
            reason: format!("missing key {key:?}"),
        })
    }

    /// Rejects keys outside `allowed`; `allowed_prefixes` admits families such as `J_1, J_2, ...`.
    pub fn check_keys(&self, allowed: &[&str], allowed_prefixes: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            let ok = allowed.contains(&key.as_str())
                || allowed_prefixes.iter().any(|p| key.starts_with(p));
            if !ok {
                return Err(Error::Config {
                    line: *line,
                    reason: format!("unknown key {key:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|(l, _)| *l).unwrap_or(0)
    }

    /// Renders `key=value` lines in the given key order.
    pub fn render(&self, order: &[String]) -> String {
        let mut out = String::new();
        for key in order {
            if let Some((_, v)) = self.entries.get(key) {
                let _ = writeln!(out, "{key}={v}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let kv = KeyValues::parse("# comment\n d = 1\nL=2\n\nalpha = 0.5 \n").unwrap();
        assert_eq!(kv.get("d"), Some("1"));
        assert_eq!(kv.parse_required::<f64>("alpha").unwrap(), 0.5);
        assert!(kv.parse_opt::<u32>("beta").unwrap().is_none());
        assert!(KeyValues::parse("d=1\nd=2").is_err());
        assert!(KeyValues::parse("no equals sign").is_err());
        assert!(kv.check_keys(&["d", "L"], &[]).is_err());
        assert!(kv.check_keys(&["d", "L", "alpha"], &[]).is_ok());
        let err = KeyValues::parse("d=x").unwrap().parse_required::<u32>("d");
        assert!(matches!(err, Err(Error::Config { line: 1, .. })));
    }
}
