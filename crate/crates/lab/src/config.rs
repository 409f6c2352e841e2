//! Plain-text `key = value` run configuration.
//!
//! One assignment per line; `#` starts a comment. Keys are case sensitive,
//! may appear at most once, and must belong to the experiment `kind`.
//! Lists are comma separated; index vectors (`k`) are separated by `;`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Correctors,
    Symbol,
    Taylor,
    Rate,
    TwoScale,
    Mc,
    Periodize,
}

const COMMON: &[&str] = &["kind", "out", "tol", "max_iter"];
const MEDIUM: &[&str] = &["medium", "amplitude", "axis", "cells", "values", "d", "modes", "grid"];
const FULL_SPACE: &[&str] = &["period", "cutoff", "direction"];

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::Correctors,
        Kind::Symbol,
        Kind::Taylor,
        Kind::Rate,
        Kind::TwoScale,
        Kind::Mc,
        Kind::Periodize,
    ];

    pub fn from_tag(tag: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| LabError::config(format!("unknown kind `{tag}`")))
    }

    pub fn tag(self) -> &'static str {
        match self {
            Kind::Correctors => "correctors",
            Kind::Symbol => "symbol",
            Kind::Taylor => "taylor",
            Kind::Rate => "rate",
            Kind::TwoScale => "two-scale",
            Kind::Mc => "mc",
            Kind::Periodize => "periodize",
        }
    }

    /// Keys accepted for this kind.
    pub fn keys(self) -> Vec<&'static str> {
        let own: &[&str] = match self {
            Kind::Correctors => &["order"],
            Kind::Symbol => &["points", "xi_max", "seed"],
            Kind::Taylor => &["degree", "radii", "ell", "seed"],
            Kind::Rate => &["ell", "eps"],
            Kind::TwoScale => &["order", "torus", "wave", "eps", "ell", "translations"],
            Kind::Mc => &["distribution", "d", "side", "delta", "k", "samples", "seed", "exact"],
            Kind::Periodize => &["distribution", "d", "sides", "delta", "order", "pairs", "seed"],
        };
        let mut keys = COMMON.to_vec();
        if self.is_continuum() {
            keys.extend_from_slice(MEDIUM);
        }
        if matches!(self, Kind::Rate | Kind::TwoScale) {
            keys.extend_from_slice(FULL_SPACE);
        }
        keys.extend_from_slice(own);
        keys
    }

    pub fn is_continuum(self) -> bool {
        !matches!(self, Kind::Mc | Kind::Periodize)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

fn all_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = Kind::ALL.iter().flat_map(|k| k.keys()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// A parsed, key-checked configuration.
#[derive(Debug, Clone)]
pub struct RawConfig {
    pub kind: Kind,
    entries: BTreeMap<String, String>,
}

pub fn load(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RawConfig> {
    let known = all_keys();
    let mut entries = BTreeMap::new();
    let mut lines = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let no = no + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| LabError::config(format!("line {no}: expected `key = value`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !known.contains(&key) {
            return Err(LabError::config(format!("line {no}: unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(LabError::config(format!("line {no}: empty value for `{key}`")));
        }
        if let Some(first) = lines.insert(key.to_string(), no) {
            return Err(LabError::config(format!("line {no}: `{key}` already set on line {first}")));
        }
        entries.insert(key.to_string(), value.to_string());
    }
    let kind = Kind::from_tag(entries.get("kind").ok_or_else(|| LabError::config("missing `kind`"))?)?;
    let allowed = kind.keys();
    for key in entries.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(LabError::config(format!("key `{key}` is not used by kind `{kind}`")));
        }
    }
    Ok(RawConfig { kind, entries })
}

impl RawConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn resolver(&self) -> Resolver<'_> {
        let mut resolved = BTreeMap::new();
        resolved.insert("kind".to_string(), self.kind.tag().to_string());
        Resolver { raw: self, resolved }
    }
}

/// Typed access that records every value actually used, defaults included.
#[derive(Debug)]
pub struct Resolver<'a> {
    raw: &'a RawConfig,
    resolved: BTreeMap<String, String>,
}

fn bad(key: &str, value: &str, what: &str) -> LabError {
    LabError::config(format!("`{key} = {value}`: expected {what}"))
}

impl Resolver<'_> {
    pub fn finish(self) -> BTreeMap<String, String> {
        self.resolved
    }

    pub fn has(&self, key: &str) -> bool {
        self.raw.get(key).is_some()
    }

    fn take(&mut self, key: &str, default: Option<String>) -> Result<String> {
        let value = match (self.raw.get(key), default) {
            (Some(v), _) => v.to_string(),
            (None, Some(d)) => d,
            (None, None) => return Err(LabError::config(format!("missing `{key}`"))),
        };
        self.resolved.insert(key.to_string(), value.clone());
        Ok(value)
    }

    pub fn string(&mut self, key: &str, default: Option<&str>) -> Result<String> {
        self.take(key, default.map(str::to_string))
    }

    pub fn usize(&mut self, key: &str, default: Option<usize>) -> Result<usize> {
        let v = self.take(key, default.map(|d| d.to_string()))?;
        v.parse().map_err(|_| bad(key, &v, "a nonnegative integer"))
    }

    pub fn u64(&mut self, key: &str, default: Option<u64>) -> Result<u64> {
        let v = self.take(key, default.map(|d| d.to_string()))?;
        v.parse().map_err(|_| bad(key, &v, "a nonnegative integer"))
    }

    pub fn f64(&mut self, key: &str, default: Option<f64>) -> Result<f64> {
        let v = self.take(key, default.map(|d| d.to_string()))?;
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(bad(key, &v, "a finite number")),
        }
    }

    pub fn bool(&mut self, key: &str, default: Option<bool>) -> Result<bool> {
        let v = self.take(key, default.map(|d| d.to_string()))?;
        match v.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(bad(key, &v, "true or false")),
        }
    }

    pub fn f64_list(&mut self, key: &str, default: Option<&[f64]>) -> Result<Vec<f64>> {
        let v = self.take(key, default.map(join))?;
        v.split(',')
            .map(|s| match s.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(bad(key, &v, "a comma-separated list of numbers")),
            })
            .collect()
    }

    pub fn usize_list(&mut self, key: &str, default: Option<&[usize]>) -> Result<Vec<usize>> {
        let v = self.take(key, default.map(join))?;
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad(key, &v, "a comma-separated list of integers")))
            .collect()
    }

    /// `;`-separated integer vectors, e.g. `1,0; 0,1`.
    pub fn index_vectors(&mut self, key: &str, default: Option<&str>) -> Result<Vec<Vec<i64>>> {
        let v = self.take(key, default.map(str::to_string))?;
        v.split(';')
            .map(|part| {
                part.split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad(key, &v, "`;`-separated integer vectors")))
                    .collect()
            })
            .collect()
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}
