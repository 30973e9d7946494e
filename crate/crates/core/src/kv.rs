//! Versioned plain-text `key = value` configuration files.
//!
//! Lines starting with `#` are comments. Lists are comma separated; lists of
//! lists separate their members with `;`. The canonical rendering puts
//! `version` first and the remaining keys in sorted order, and the digest is
//! taken over that rendering.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::digest_hex;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid_data(format!("config line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::invalid_data(format!("config line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::invalid_data(format!("config line {}: duplicate key {k:?}", i + 1)));
            }
        }
        let version: u32 = entries
            .get("version")
            .ok_or_else(|| Error::invalid_data("config has no version"))?
            .parse()
            .map_err(|_| Error::invalid_data("config version is not an integer"))?;
        if version != CONFIG_VERSION {
            return Err(Error::invalid_data(format!("unsupported config version {version}")));
        }
        Ok(Self { entries })
    }

    pub fn render(&self) -> String {
        let mut out = format!("version = {CONFIG_VERSION}\n");
        for (k, v) in &self.entries {
            if k != "version" {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn digest(&self) -> String {
        digest_hex(self.render().as_bytes())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_list<V: Display>(&mut self, key: &str, values: &[V]) {
        self.set(key, join(values, ","));
    }

    pub fn set_nested<V: Display>(&mut self, key: &str, values: &[Vec<V>]) {
        let parts: Vec<String> = values.iter().map(|v| join(v, ",")).collect();
        self.set(key, parts.join("; "));
    }

    pub fn merge(&mut self, other: &KvFile) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.raw(key).map(|s| parse_one(key, s)).transpose()
    }

    pub fn get_or<V: FromStr>(&self, key: &str, default: V) -> Result<V> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        self.raw(key).map(|s| parse_list(key, s)).transpose()
    }

    pub fn get_nested<V: FromStr>(&self, key: &str) -> Result<Option<Vec<Vec<V>>>> {
        self.raw(key)
            .map(|s| s.split(';').map(|part| parse_list(key, part)).collect())
            .transpose()
    }
}

fn join<V: Display>(values: &[V], sep: &str) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

fn parse_one<V: FromStr>(key: &str, s: &str) -> Result<V> {
    s.trim().parse().map_err(|_| Error::invalid_data(format!("config key {key}: cannot parse {s:?}")))
}

fn parse_list<V: FromStr>(key: &str, s: &str) -> Result<Vec<V>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| parse_one(key, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let text = "# c\nversion = 1\nb = 2\na.list = 1, 2,3\nn = 1,2; 3\n";
        let kv = KvFile::parse(text).unwrap();
        assert_eq!(kv.get_list::<u32>("a.list").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(kv.get_nested::<u32>("n").unwrap(), Some(vec![vec![1, 2], vec![3]]));
        let again = KvFile::parse(&kv.render()).unwrap();
        assert_eq!(again, kv);
        assert_eq!(again.digest(), kv.digest());
        assert!(KvFile::parse("b = 2\n").is_err());
        assert!(KvFile::parse("version = 1\nb = 2\nb = 3\n").is_err());
        assert!(kv.get::<u32>("a.list").is_err());
    }
}
