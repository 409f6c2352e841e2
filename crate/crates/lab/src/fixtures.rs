//! Frozen regression constants (`fixtures/enumeration.json`).

use serde::Deserialize;

pub const ENUMERATION_JSON: &str = include_str!("../fixtures/enumeration.json");

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EnumerationFixtures {
    pub version: u32,
    pub notes: String,
    pub tolerance: f64,
    pub entries: Vec<EnumerationEntry>,
}

/// Exact `B̂^δ_L(ξ)` for the Rademacher law at `ξ = 2πk/L`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EnumerationEntry {
    pub d: usize,
    pub side: usize,
    pub delta: f64,
    pub k: Vec<i64>,
    pub re: f64,
    pub im: f64,
    pub configurations: usize,
}

pub fn enumeration() -> EnumerationFixtures {
    serde_json::from_str(ENUMERATION_JSON).expect("fixtures file is valid JSON")
}
