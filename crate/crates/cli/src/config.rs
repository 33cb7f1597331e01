//! Experiment config file (TOML). Every field is optional; flags given on the
//! command line take precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use expstable::DecorationSpec;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub subcommand: Option<String>,
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub density_coeff: Option<f64>,
    pub decoration: Option<DecorationSpec>,
    pub window: Option<WindowConfig>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub alpha: Option<Vec<f64>>,
    pub pool: Option<u64>,
    pub mc_inner: Option<u64>,
    pub t: Option<f64>,
    pub checkpoints: Option<Vec<f64>>,
    pub area: Option<WindowConfig>,
    pub depths: Option<Vec<f64>>,
}

pub const TOLERANCE_KEYS: [&str; 2] = ["sigmas", "agree_fraction"];

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config `{}`: {e}", path.display()))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| format!("config `{}`: {e}", path.display()))?;
        for key in cfg.tolerances.keys() {
            if !TOLERANCE_KEYS.contains(&key.as_str()) {
                return Err(format!(
                    "config `{}`: unknown tolerance `tolerances.{key}` (expected one of {})",
                    path.display(),
                    TOLERANCE_KEYS.join(", ")
                ));
            }
        }
        Ok(cfg)
    }

    pub fn tolerance(&self, key: &str) -> Option<f64> {
        self.tolerances.get(key).copied()
    }
}
