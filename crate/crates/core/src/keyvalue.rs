//! Line-oriented `key=value` text used for machine-readable reports and
//! configuration files.
//!
//! One pair per line, split at the first `=`, surrounding whitespace
//! trimmed. Blank lines and lines starting with `#` are skipped. Keys are
//! kept in file order; later duplicates override earlier ones on lookup.

use std::fmt::{self, Write};

use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pairs: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: Location::Line(i + 1),
                message: format!("expected key=value, got {line:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse { location: Location::Line(i + 1), message: "empty key".into() });
            }
            pairs.push((key.to_string(), value.trim().to_string()));
        }
        Ok(Self { pairs })
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.pairs.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Format(format!("cannot parse value {v:?} of key {key}"))),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.pairs {
            f.write_str(k)?;
            f.write_char('=')?;
            f.write_str(v)?;
            f.write_char('\n')?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints() {
        let kv = KeyValues::parse("# report\nmoving_iou = 0.5\n\ntau=0.25\ntau=1\n").unwrap();
        assert_eq!(kv.get("moving_iou"), Some("0.5"));
        assert_eq!(kv.get_parsed::<f64>("tau").unwrap(), Some(1.0));
        assert_eq!(kv.get("missing"), None);
        assert_eq!(kv.to_string(), "moving_iou=0.5\ntau=0.25\ntau=1\n");
        assert_eq!(KeyValues::parse(&kv.to_string()).unwrap(), kv);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            KeyValues::parse("a=1\nbogus\n"),
            Err(Error::Parse { location: Location::Line(2), .. })
        ));
        assert!(KeyValues::parse("=3").is_err());
        assert!(KeyValues::parse("x=abc").unwrap().get_parsed::<f64>("x").is_err());
    }
}
