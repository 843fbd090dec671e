use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("unrecognised {kind} `{value}`")]
pub struct ParseEnumError {
    kind: &'static str,
    value: String,
}

/// Index option market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Market {
    Spx,
    Rut,
}

impl Market {
    pub const ALL: [Market; 2] = [Market::Spx, Market::Rut];

    pub fn as_str(self) -> &'static str {
        match self {
            Market::Spx => "SPX",
            Market::Rut => "RUT",
        }
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Market {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SPX" => Ok(Market::Spx),
            "RUT" => Ok(Market::Rut),
            _ => Err(ParseEnumError {
                kind: "market",
                value: s.to_string(),
            }),
        }
    }
}

/// Discount benchmark the implied discount factors are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Ois,
    Dgs,
}

impl Benchmark {
    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::Ois => "ois",
            Benchmark::Dgs => "dgs",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Benchmark {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ois" => Ok(Benchmark::Ois),
            "dgs" => Ok(Benchmark::Dgs),
            _ => Err(ParseEnumError {
                kind: "benchmark",
                value: s.to_string(),
            }),
        }
    }
}
