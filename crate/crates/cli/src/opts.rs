//! Shared option groups and the defaults chain: built-in defaults, then the
//! `NUCLEOPIPE_CONFIG` file, then explicit flags.

use crate::errors::CliError;
use clap::Args;
use nucleopipe::config::{loss_weights_from_kv, parse_kv};
use nucleopipe::instseg::WatershedConfig;
use nucleopipe::losses::LossWeights;
use nucleopipe::network::NetworkConfig;
use std::collections::BTreeMap;

pub const CONFIG_ENV: &str = "NUCLEOPIPE_CONFIG";

/// Clap value parser for probabilities.
pub fn probability(s: &str) -> Result<f32, String> {
    let v: f32 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("{s:?} is not a count"))?;
    if v == 0 {
        Err("must be at least 1".into())
    } else {
        Ok(v)
    }
}

/// Key=value defaults from the `NUCLEOPIPE_CONFIG` file, when set.
pub struct FileDefaults {
    kv: BTreeMap<String, String>,
}

impl FileDefaults {
    pub fn load() -> Result<Self, CliError> {
        let kv = match std::env::var_os(CONFIG_ENV) {
            None => BTreeMap::new(),
            Some(path) => {
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Missing(format!("{CONFIG_ENV} file {path:?}: {e}"))
                })?;
                parse_kv(&text)?
            }
        };
        Ok(FileDefaults { kv })
    }

    fn get_f32(&self, key: &str) -> Result<Option<f32>, CliError> {
        self.kv
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Format(format!("config key {key}: {v:?}")))
            })
            .transpose()
    }

    fn get_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        self.kv
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Format(format!("config key {key}: {v:?}")))
            })
            .transpose()
    }

    pub fn loss_weights(&self) -> Result<LossWeights, CliError> {
        Ok(loss_weights_from_kv(&self.kv)?)
    }
}

/// Watershed knobs shared by `instances` and `pipeline`.
#[derive(Args, Debug, Clone)]
pub struct WatershedOpts {
    /// Edge proposals below this probability are discarded
    #[arg(long, value_parser = probability)]
    pub edge_threshold: Option<f32>,
    /// Semantic probability at or above this value is foreground
    #[arg(long, value_parser = probability)]
    pub semantic_threshold: Option<f32>,
    /// Drop foreground components smaller than this many pixels
    #[arg(long, value_parser = positive)]
    pub min_area: Option<usize>,
    /// Run a plain watershed on the thresholded semantic map instead of the
    /// marker-controlled one
    #[arg(long)]
    pub uncontrolled: bool,
}

impl WatershedOpts {
    pub fn resolve(&self, defaults: &FileDefaults) -> Result<WatershedConfig, CliError> {
        let base = WatershedConfig::default();
        let cfg = WatershedConfig {
            edge_threshold: self
                .edge_threshold
                .or(defaults.get_f32("edge_threshold")?)
                .unwrap_or(base.edge_threshold),
            semantic_threshold: self
                .semantic_threshold
                .or(defaults.get_f32("semantic_threshold")?)
                .unwrap_or(base.semantic_threshold),
            min_instance_area: self
                .min_area
                .or(defaults.get_usize("min_area")?)
                .unwrap_or(base.min_instance_area),
            controlled: !self.uncontrolled,
        };
        cfg.validate().map_err(CliError::from)?;
        Ok(cfg)
    }
}

/// Network architecture flags shared by `infer`, `pipeline`, `init-weights`.
#[derive(Args, Debug, Clone)]
pub struct NetworkOpts {
    /// Filters at the first encoder stage
    #[arg(long, default_value_t = 16)]
    pub filters: usize,
    /// Encoder/decoder stage count
    #[arg(long, default_value_t = 4)]
    pub stages: usize,
    /// Class head channels (background included)
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
}

impl NetworkOpts {
    pub fn config_for(&self, height: usize, width: usize) -> Result<NetworkConfig, CliError> {
        let cfg = NetworkConfig {
            base_filters: self.filters,
            stages: self.stages,
            class_channels: self.classes,
            input_height: height,
            input_width: width,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
