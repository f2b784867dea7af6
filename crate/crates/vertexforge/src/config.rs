//! Run configuration and the lattice/Cartan input file format.
//!
//! A Cartan input file is a JSON document of either shape:
//!   {"rank": r, "gram": [[...]]}
//!   {"cartan": "A1"|"A2"|"B2"|"G2", "level": l}

use crate::lattice::{LatticeData, LatticeError};
use crate::qaffine::{CartanData, CartanError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid lattice: {0}")]
    Lattice(#[from] LatticeError),
    #[error("invalid cartan: {0}")]
    Cartan(#[from] CartanError),
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parsed content of a lattice/Cartan input file.
#[derive(Debug, Clone)]
pub enum CartanInput {
    Gram(LatticeData),
    Named { cartan: CartanData, level: i64 },
}

#[derive(Debug, Deserialize)]
struct CartanInputRaw {
    rank: Option<usize>,
    gram: Option<Vec<Vec<i64>>>,
    cartan: Option<String>,
    level: Option<i64>,
}

impl CartanInput {
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, ConfigError> {
        let raw: CartanInputRaw = serde_json::from_slice(bytes)?;
        match (raw.gram, raw.cartan) {
            (Some(gram), None) => {
                if let Some(rank) = raw.rank {
                    if rank != gram.len() {
                        return Err(ConfigError::Invalid(format!(
                            "declared rank {} does not match gram size {}",
                            rank,
                            gram.len()
                        )));
                    }
                }
                Ok(CartanInput::Gram(LatticeData::new(gram)?))
            }
            (None, Some(label)) => {
                let cartan = CartanData::by_label(&label)?;
                let level = raw.level.unwrap_or(1);
                if !(1..=6).contains(&level) {
                    return Err(ConfigError::Invalid(format!(
                        "level {} out of supported range 1..=6",
                        level
                    )));
                }
                Ok(CartanInput::Named { cartan, level })
            }
            _ => Err(ConfigError::Invalid(
                "expected exactly one of \"gram\" or \"cartan\"".to_string(),
            )),
        }
    }
}

/// Truncation and suite-selection configuration shared by every runner.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RunConfig {
    #[serde(default = "default_hbar_order")]
    pub hbar_order: usize,
    #[serde(default = "default_weight_max")]
    pub weight_max: i64,
    #[serde(default = "default_z_min")]
    pub z_min: i64,
    #[serde(default = "default_z_max")]
    pub z_max: i64,
    #[serde(default = "default_bi1")]
    pub bi_w1: i64,
    #[serde(default = "default_bi2")]
    pub bi_w2: i64,
    #[serde(default = "default_cartan")]
    pub cartan: String,
    #[serde(default = "default_level")]
    pub level: i64,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub mutant: Option<String>,
}

fn default_hbar_order() -> usize {
    4
}
fn default_weight_max() -> i64 {
    6
}
fn default_z_min() -> i64 {
    -8
}
fn default_z_max() -> i64 {
    8
}
fn default_bi1() -> i64 {
    8
}
fn default_bi2() -> i64 {
    6
}
fn default_cartan() -> String {
    "A1".to_string()
}
fn default_level() -> i64 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hbar_order: default_hbar_order(),
            weight_max: default_weight_max(),
            z_min: default_z_min(),
            z_max: default_z_max(),
            bi_w1: default_bi1(),
            bi_w2: default_bi2(),
            cartan: default_cartan(),
            level: default_level(),
            suites: Vec::new(),
            mutant: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_slice(bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hbar_order < 1 || self.hbar_order > 16 {
            return Err(ConfigError::Invalid(format!(
                "hbar_order {} out of range 1..=16",
                self.hbar_order
            )));
        }
        if self.weight_max < 2 || self.weight_max > 16 {
            return Err(ConfigError::Invalid(format!(
                "weight_max {} out of range 2..=16",
                self.weight_max
            )));
        }
        if self.z_min >= self.z_max || self.z_max > 64 || self.z_min < -64 {
            return Err(ConfigError::Invalid(format!(
                "empty or oversized z window [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        if self.bi_w1 < 1 || self.bi_w2 < 1 || self.bi_w1 > 32 || self.bi_w2 > 32 {
            return Err(ConfigError::Invalid("bad bivariate window".to_string()));
        }
        if !(1..=4).contains(&self.level) {
            return Err(ConfigError::Invalid(format!(
                "level {} out of supported range 1..=4",
                self.level
            )));
        }
        Ok(())
    }

    pub fn cartan_data(&self) -> Result<CartanData, ConfigError> {
        Ok(CartanData::by_label(&self.cartan)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_gram_input() {
        let input = br#"{"rank": 1, "gram": [[2]]}"#;
        match CartanInput::from_json_bytes(input).unwrap() {
            CartanInput::Gram(d) => assert_eq!(d.rank(), 1),
            _ => panic!("expected gram input"),
        }
    }

    #[test]
    fn parse_named_input() {
        let input = br#"{"cartan": "B2", "level": 2}"#;
        match CartanInput::from_json_bytes(input).unwrap() {
            CartanInput::Named { cartan, level } => {
                assert_eq!(cartan.label, "B2");
                assert_eq!(level, 2);
            }
            _ => panic!("expected named input"),
        }
    }

    #[test]
    fn reject_bad_inputs() {
        assert!(CartanInput::from_json_bytes(b"{}").is_err());
        assert!(CartanInput::from_json_bytes(br#"{"gram": [[1]]}"#).is_err());
        assert!(CartanInput::from_json_bytes(br#"{"rank": 2, "gram": [[2]]}"#).is_err());
        assert!(CartanInput::from_json_bytes(br#"{"cartan": "E8"}"#).is_err());
        assert!(CartanInput::from_json_bytes(b"not json").is_err());
        // both shapes at once
        assert!(
            CartanInput::from_json_bytes(br#"{"gram": [[2]], "cartan": "A1"}"#).is_err()
        );
    }

    #[test]
    fn run_config_defaults_and_validation() {
        let cfg = RunConfig::from_json_bytes(b"{}").unwrap();
        assert_eq!(cfg.hbar_order, 4);
        assert_eq!(cfg.weight_max, 6);
        assert_eq!((cfg.z_min, cfg.z_max), (-8, 8));
        assert!(RunConfig::from_json_bytes(br#"{"hbar_order": 0}"#).is_err());
        assert!(RunConfig::from_json_bytes(br#"{"z_min": 5, "z_max": 4}"#).is_err());
    }
}
