//! Detector configuration and its flat `key = value` file format.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::NUM_INDICATORS;

/// Every key accepted in a config file, in canonical order.
pub const CONFIG_KEYS: [&str; 13] = [
    "height_ratio_max",
    "angle_low_deg",
    "angle_high_deg",
    "knee_ankle_max",
    "head_floor_max",
    "speed_min",
    "visibility_min",
    "buffer_len",
    "persistence_fraction",
    "weights",
    "vote_threshold",
    "cooldown_frames",
    "warmup_frames",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Height indicator fires when the ratio is strictly below this.
    pub height_ratio_max: f64,
    /// Torso-leg angle band, inclusive, in degrees.
    pub angle_low_deg: f64,
    pub angle_high_deg: f64,
    pub knee_ankle_max: f64,
    pub head_floor_max: f64,
    /// Downward hip speed, normalized units per second.
    pub speed_min: f64,
    pub visibility_min: f64,
    pub buffer_len: usize,
    pub persistence_fraction: f64,
    /// Indicator order: height, angle, knee-ankle, head-floor, alignment, movement.
    pub weights: [f64; NUM_INDICATORS],
    pub vote_threshold: f64,
    pub cooldown_frames: u64,
    pub warmup_frames: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            height_ratio_max: 0.5,
            angle_low_deg: 60.0,
            angle_high_deg: 120.0,
            knee_ankle_max: 0.1,
            head_floor_max: 0.15,
            speed_min: 1.2,
            visibility_min: 0.5,
            buffer_len: 20,
            persistence_fraction: 0.5,
            weights: [1.0; NUM_INDICATORS],
            vote_threshold: 4.0,
            cooldown_frames: 60,
            warmup_frames: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl DetectorConfig {
    /// Number of firings an indicator needs inside its window to be active.
    pub fn required_firings(&self) -> usize {
        // Small slack so that e.g. 0.3 * 10 does not round up to 4.
        let raw = (self.persistence_fraction * self.buffer_len as f64 - 1e-9).ceil();
        (raw.max(1.0) as usize).min(self.buffer_len)
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [
            ("height_ratio_max", self.height_ratio_max),
            ("angle_low_deg", self.angle_low_deg),
            ("angle_high_deg", self.angle_high_deg),
            ("knee_ankle_max", self.knee_ankle_max),
            ("head_floor_max", self.head_floor_max),
            ("speed_min", self.speed_min),
            ("visibility_min", self.visibility_min),
            ("persistence_fraction", self.persistence_fraction),
            ("vote_threshold", self.vote_threshold),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{key} must be finite")));
            }
        }
        if !(self.persistence_fraction > 0.0 && self.persistence_fraction <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "persistence_fraction must lie in (0, 1], got {}",
                self.persistence_fraction
            )));
        }
        if self.buffer_len == 0 {
            return Err(ConfigError::Invalid("buffer_len must be at least 1".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::Invalid(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum = self.weight_sum();
        if !(self.vote_threshold > 0.0 && self.vote_threshold <= sum) {
            return Err(ConfigError::Invalid(format!(
                "vote_threshold must lie in (0, {sum}], got {}",
                self.vote_threshold
            )));
        }
        if self.angle_low_deg >= self.angle_high_deg {
            return Err(ConfigError::Invalid(format!(
                "angle_low_deg ({}) must be below angle_high_deg ({})",
                self.angle_low_deg, self.angle_high_deg
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility_min) {
            return Err(ConfigError::Invalid(
                "visibility_min must lie in [0, 1]".into(),
            ));
        }
        if self.warmup_frames == 0 {
            return Err(ConfigError::Invalid("warmup_frames must be at least 1".into()));
        }
        Ok(())
    }

    /// Assigns one field from its textual value. Does not validate the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = |message: String| ConfigError::BadValue {
            key: key.to_string(),
            message,
        };
        let float = |v: &str| -> Result<f64, ConfigError> {
            v.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("`{v}`: {e}")))
        };
        let uint = |v: &str| -> Result<u64, ConfigError> {
            v.trim()
                .parse::<u64>()
                .map_err(|e| bad(format!("`{v}`: {e}")))
        };
        match key {
            "height_ratio_max" => self.height_ratio_max = float(value)?,
            "angle_low_deg" => self.angle_low_deg = float(value)?,
            "angle_high_deg" => self.angle_high_deg = float(value)?,
            "knee_ankle_max" => self.knee_ankle_max = float(value)?,
            "head_floor_max" => self.head_floor_max = float(value)?,
            "speed_min" => self.speed_min = float(value)?,
            "visibility_min" => self.visibility_min = float(value)?,
            "buffer_len" => self.buffer_len = uint(value)? as usize,
            "persistence_fraction" => self.persistence_fraction = float(value)?,
            "vote_threshold" => self.vote_threshold = float(value)?,
            "cooldown_frames" => self.cooldown_frames = uint(value)?,
            "warmup_frames" => self.warmup_frames = uint(value)? as usize,
            "weights" => {
                let inner = value
                    .strip_prefix('[')
                    .and_then(|v| v.strip_suffix(']'))
                    .unwrap_or(value);
                let parts: Vec<&str> = inner
                    .split([',', ':'])
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .collect();
                if parts.len() != NUM_INDICATORS {
                    return Err(bad(format!(
                        "expected {NUM_INDICATORS} weights, found {}",
                        parts.len()
                    )));
                }
                for (w, p) in self.weights.iter_mut().zip(parts) {
                    *w = float(p)?;
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Reads the flat `key = value` format. `#` starts a comment; keys absent
    /// from the text keep their defaults. The result is validated.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = DetectorConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| ConfigError::Syntax {
                    line: n + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                })?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders every key in canonical order; `from_kv_str` reads it back.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_string(key));
        }
        out
    }

    pub fn value_string(&self, key: &str) -> String {
        match key {
            "height_ratio_max" => self.height_ratio_max.to_string(),
            "angle_low_deg" => self.angle_low_deg.to_string(),
            "angle_high_deg" => self.angle_high_deg.to_string(),
            "knee_ankle_max" => self.knee_ankle_max.to_string(),
            "head_floor_max" => self.head_floor_max.to_string(),
            "speed_min" => self.speed_min.to_string(),
            "visibility_min" => self.visibility_min.to_string(),
            "buffer_len" => self.buffer_len.to_string(),
            "persistence_fraction" => self.persistence_fraction.to_string(),
            "weights" => self
                .weights
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "vote_threshold" => self.vote_threshold.to_string(),
            "cooldown_frames" => self.cooldown_frames.to_string(),
            "warmup_frames" => self.warmup_frames.to_string(),
            _ => String::new(),
        }
    }
}
