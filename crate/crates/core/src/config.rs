//! Experiment configuration file.
//!
//! Every section and field is optional; missing values take their defaults.
//!
//! ```json
//! {
//!   "patch":  {"dim": 6, "width_frac": 0.25, "gray": 0.0, "boundary_kind": "bezier", "anchor": 0.4},
//!   "swarm":  {"pop": 50, "iters": 10, "inertia": 0.9, "cognitive": 1.6, "social": 1.4,
//!              "r1": 0.5, "r2": 0.5, "random_factors": false, "seed": 0, "tau": 0.45},
//!   "eot":    {"scale_range": [0.85, 1.15], "translate_frac": 0.05, "noise_sigma_max": 0.02,
//!              "tps_grid": 4, "tps_offset_frac": 0.02, "draws_per_eval": 4},
//!   "scene":  {"image_w": 640, "image_h": 512, "bg_level": 0.25, "bg_noise": 0.02, "body_level": 0.8,
//!              "body_gradient": 0.15, "height_range": [140, 360], "count": 30},
//!   "oracle": {"kind": "toy", "logistic_a": 6.0, "logistic_b": -2.2}
//! }
//! ```
//!
//! `swarm.seed` is the only seed; it drives scene synthesis, the swarm,
//! fitness draws and evaluation draws. A bridge oracle is selected with
//! `{"kind": "bridge", "endpoint": "tcp://127.0.0.1:7000"}` or a command line
//! such as `"python3 -m detector_bridge --mock"`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{PatchConsts, SwarmConfig};
use crate::oracle::{BridgeEndpoint, BridgeOracle, Oracle, OracleError, ToyDetectorConfig, ToyOracle};
use crate::scene::SceneConfig;
use crate::transforms::EotConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is malformed: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Toy,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub kind: OracleKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub logistic_a: f64,
    pub logistic_b: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let toy = ToyDetectorConfig::default();
        Self {
            kind: OracleKind::Toy,
            endpoint: None,
            logistic_a: toy.logistic_a,
            logistic_b: toy.logistic_b,
        }
    }
}

impl OracleConfig {
    pub fn build(&self) -> Result<Box<dyn Oracle + Send>, OracleError> {
        match self.kind {
            OracleKind::Toy => {
                let mut cfg = ToyDetectorConfig::default();
                cfg.logistic_a = self.logistic_a;
                cfg.logistic_b = self.logistic_b;
                Ok(Box::new(ToyOracle::new(cfg)))
            }
            OracleKind::Bridge => {
                let spec = self.endpoint.as_deref().unwrap_or_default();
                Ok(Box::new(BridgeOracle::connect(&BridgeEndpoint::parse(spec)?)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub patch: PatchConsts,
    pub swarm: SwarmConfig,
    pub eot: EotConfig,
    pub scene: SceneConfig,
    pub oracle: OracleConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_json(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section: &str, msg: String| ConfigError::Invalid(format!("{section}: {msg}"));
        self.patch.validate().map_err(|m| invalid("patch", m))?;
        self.swarm.validate().map_err(|m| invalid("swarm", m))?;
        self.eot.validate().map_err(|e| invalid("eot", e.to_string()))?;
        self.scene.validate().map_err(|e| invalid("scene", e.to_string()))?;
        match (self.oracle.kind, &self.oracle.endpoint) {
            (OracleKind::Bridge, None) => Err(invalid("oracle", "bridge oracle needs an endpoint".into())),
            (OracleKind::Toy, Some(_)) => Err(invalid("oracle", "toy oracle takes no endpoint".into())),
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
