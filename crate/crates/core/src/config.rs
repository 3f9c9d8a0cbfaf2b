//! Plain-text `key=value` configuration parsing for loss weights and scene
//! specs. Lines starting with `#` are comments; blank lines are ignored.

use crate::losses::LossWeights;
use crate::maps::NUM_CLASSES;
use crate::synth::SceneSpec;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("key {key}: {reason}")]
    BadValue { key: String, reason: String },
}

/// Parses `key=value` text into an ordered map. Later duplicates win.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::BadLine {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse_f64(kv: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64, ConfigError> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            reason: format!("{v:?} is not a number"),
        }),
    }
}

fn parse_usize(
    kv: &BTreeMap<String, String>,
    key: &str,
    default: usize,
) -> Result<usize, ConfigError> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
            key: key.into(),
            reason: format!("{v:?} is not a count"),
        }),
    }
}

fn parse_list(kv: &BTreeMap<String, String>, key: &str, len: usize) -> Result<Option<Vec<f64>>, ConfigError> {
    let Some(v) = kv.get(key) else {
        return Ok(None);
    };
    let values: Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values = values.map_err(|_| ConfigError::BadValue {
        key: key.into(),
        reason: format!("{v:?} is not a comma-separated number list"),
    })?;
    if values.len() != len {
        return Err(ConfigError::BadValue {
            key: key.into(),
            reason: format!("expected {len} values, got {}", values.len()),
        });
    }
    Ok(Some(values))
}

/// Loss weights from config text. Recognized keys: `lambda_a`, `lambda_b`,
/// `lambda_c`, `class_weights` (comma-separated, one per class).
pub fn loss_weights_from_kv(kv: &BTreeMap<String, String>) -> Result<LossWeights, ConfigError> {
    let defaults = LossWeights::default();
    let class_weights = parse_list(kv, "class_weights", NUM_CLASSES)?
        .unwrap_or(defaults.class_weights);
    Ok(LossWeights {
        lambda_a: parse_f64(kv, "lambda_a", defaults.lambda_a)?,
        lambda_b: parse_f64(kv, "lambda_b", defaults.lambda_b)?,
        lambda_c: parse_f64(kv, "lambda_c", defaults.lambda_c)?,
        class_weights,
    })
}

/// Scene spec from config text. Recognized keys: `height`, `width`, `count`,
/// `radius_min`, `radius_max`, `overlap`, `mixture` (five values), `seed`.
pub fn scene_spec_from_kv(kv: &BTreeMap<String, String>) -> Result<SceneSpec, ConfigError> {
    let defaults = SceneSpec::default();
    let mixture = match parse_list(kv, "mixture", NUM_CLASSES - 1)? {
        Some(values) => {
            let mut m = [0.0; NUM_CLASSES - 1];
            m.copy_from_slice(&values);
            m
        }
        None => defaults.mixture,
    };
    let seed = match kv.get("seed") {
        None => defaults.seed,
        Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
            key: "seed".into(),
            reason: format!("{v:?} is not an unsigned integer"),
        })?,
    };
    Ok(SceneSpec {
        height: parse_usize(kv, "height", defaults.height)?,
        width: parse_usize(kv, "width", defaults.width)?,
        count: parse_usize(kv, "count", defaults.count)?,
        radius_min: parse_f64(kv, "radius_min", defaults.radius_min)?,
        radius_max: parse_f64(kv, "radius_max", defaults.radius_max)?,
        overlap: parse_f64(kv, "overlap", defaults.overlap)?,
        mixture,
        seed,
    })
}
