//! Engine configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'; blank lines are ignored
//! weights = 0.45, 0.25, 0.25, 0.05   # summary, description, component, platform
//! k = 5
//! algorithm = auto                   # auto | brute | kd | ball
//! trace_pattern = ^\s*at\s+\S+       # repeatable; replaces the default frame grammar
//! encoder_endpoint = http://127.0.0.1:8500/v1/pair
//! ```
//!
//! Everything after the first `=` is the value, with surrounding whitespace
//! trimmed. A `#` only starts a comment at the beginning of a line or after
//! whitespace, except inside `trace_pattern` values, which are taken verbatim.
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nominate::{Algorithm, SelectionThresholds};
use crate::preprocess::DEFAULT_TRACE_PATTERNS;
use crate::rerank::{EncoderConfig, LogisticConfig, DEFAULT_ENCODER_TIMEOUT_MS, DEFAULT_PAIR_RATIO, DEFAULT_THRESHOLD};
use crate::vectorize::BlockWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub weights: BlockWeights,
    pub k: usize,
    /// `None` selects from the data.
    pub algorithm: Option<Algorithm>,
    pub selection: SelectionThresholds,
    pub cache_capacity: usize,
    pub pair_ratio: f64,
    /// Pair-classifier duplicate threshold.
    pub threshold: f64,
    /// Minimum top similarity for the submission gate to call a report a likely duplicate.
    pub verdict_threshold: f64,
    pub trace_patterns: Vec<String>,
    pub encoder: Option<EncoderConfig>,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub similarity_bin_width: f64,
}

impl Default for Config {
    fn default() -> Self {
        let logistic = LogisticConfig::default();
        Self {
            weights: BlockWeights::default(),
            k: 5,
            algorithm: None,
            selection: SelectionThresholds::default(),
            cache_capacity: crate::nominate::RecentCache::default().capacity(),
            pair_ratio: DEFAULT_PAIR_RATIO,
            threshold: DEFAULT_THRESHOLD,
            verdict_threshold: 0.5,
            trace_patterns: DEFAULT_TRACE_PATTERNS.iter().map(|p| p.to_string()).collect(),
            encoder: None,
            seed: logistic.seed,
            holdout_fraction: 0.2,
            learning_rate: logistic.learning_rate,
            epochs: logistic.epochs,
            similarity_bin_width: 0.1,
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        let mut custom_patterns: Option<Vec<String>> = None;
        let mut endpoint: Option<String> = None;
        let mut timeout_ms = DEFAULT_ENCODER_TIMEOUT_MS;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let bad = |reason: String| Error::Config { line: line_no, reason };
            if raw.trim_start().starts_with('#') || raw.trim().is_empty() {
                continue;
            }
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {:?}", raw.trim())))?;
            let key = key.trim();
            let value = if key == "trace_pattern" {
                value.trim()
            } else {
                strip_comment(value).trim()
            };

            fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
                value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
            }

            match key {
                "weights" => {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|p| num("weights", p.trim()))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(bad)?;
                    let arr: [f64; 4] = parts
                        .try_into()
                        .map_err(|p: Vec<f64>| bad(format!("weights: expected 4 values, got {}", p.len())))?;
                    config.weights = BlockWeights(arr);
                }
                "k" => config.k = num(key, value).map_err(bad)?,
                "algorithm" => {
                    config.algorithm = match value {
                        "auto" => None,
                        other => Some(other.parse().map_err(|e: Error| bad(e.to_string()))?),
                    }
                }
                "cache_capacity" => config.cache_capacity = num(key, value).map_err(bad)?,
                "pair_ratio" => config.pair_ratio = num(key, value).map_err(bad)?,
                "threshold" => config.threshold = num(key, value).map_err(bad)?,
                "verdict_threshold" => config.verdict_threshold = num(key, value).map_err(bad)?,
                "trace_pattern" => custom_patterns.get_or_insert_with(Vec::new).push(value.to_string()),
                "encoder_endpoint" => endpoint = Some(value.to_string()).filter(|v| !v.is_empty()),
                "encoder_timeout_ms" => timeout_ms = num(key, value).map_err(bad)?,
                "seed" => config.seed = num(key, value).map_err(bad)?,
                "holdout_fraction" => config.holdout_fraction = num(key, value).map_err(bad)?,
                "learning_rate" => config.learning_rate = num(key, value).map_err(bad)?,
                "epochs" => config.epochs = num(key, value).map_err(bad)?,
                "similarity_bin_width" => config.similarity_bin_width = num(key, value).map_err(bad)?,
                "brute_max_samples" => config.selection.brute_max_samples = num(key, value).map_err(bad)?,
                "kd_max_features" => config.selection.kd_max_features = num(key, value).map_err(bad)?,
                "ball_max_features" => config.selection.ball_max_features = num(key, value).map_err(bad)?,
                "sparse_density" => config.selection.sparse_density = num(key, value).map_err(bad)?,
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }

        if let Some(patterns) = custom_patterns {
            config.trace_patterns = patterns;
        }
        config.encoder = endpoint.map(|endpoint| EncoderConfig { endpoint, timeout_ms });
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::Config { line: 0, reason };
        BlockWeights::new(self.weights.0)?;
        if self.k == 0 {
            return Err(invalid("k must be at least 1".into()));
        }
        if self.cache_capacity == 0 {
            return Err(invalid("cache_capacity must be at least 1".into()));
        }
        if !(self.pair_ratio.is_finite() && self.pair_ratio > 0.0) {
            return Err(invalid(format!("pair_ratio {} must be positive", self.pair_ratio)));
        }
        for (name, value) in [
            ("threshold", self.threshold),
            ("verdict_threshold", self.verdict_threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(format!("{name} {value} outside [0, 1]")));
            }
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(invalid(format!(
                "holdout_fraction {} outside (0, 1)",
                self.holdout_fraction
            )));
        }
        if !(self.similarity_bin_width > 0.0 && self.similarity_bin_width <= 1.0) {
            return Err(invalid(format!(
                "similarity_bin_width {} outside (0, 1]",
                self.similarity_bin_width
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        crate::preprocess::Preprocessor::with_patterns(&self.trace_patterns)?;
        Ok(())
    }

    pub fn logistic(&self) -> LogisticConfig {
        LogisticConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = Config::default();
        assert_eq!(c.weights.0, [0.45, 0.25, 0.25, 0.05]);
        assert_eq!(c.k, 5);
        assert_eq!(c.pair_ratio, 3.0);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.cache_capacity, 1024);
        c.validate().unwrap();
    }

    #[test]
    fn parses_every_key() {
        let text = r#"
# tuned
weights = 0.4, 0.3, 0.2, 0.1
k = 10   # longer lists
algorithm = ball
cache_capacity = 16
pair_ratio = 1
threshold = 0.6
verdict_threshold = 0.7
trace_pattern = ^frame #\d+
trace_pattern = ^\s*at\s
encoder_endpoint = http://localhost:1/v1/pair
encoder_timeout_ms = 500
seed = 7
holdout_fraction = 0.3
learning_rate = 0.5
epochs = 10
similarity_bin_width = 0.05
brute_max_samples = 10
kd_max_features = 5
ball_max_features = 50
sparse_density = 0.1
"#;
        let c = Config::parse(text).unwrap();
        assert_eq!(c.weights.0, [0.4, 0.3, 0.2, 0.1]);
        assert_eq!(c.k, 10);
        assert_eq!(c.algorithm, Some(Algorithm::BallTree));
        assert_eq!(c.trace_patterns, [r"^frame #\d+", r"^\s*at\s"]);
        assert_eq!(c.encoder.as_ref().unwrap().timeout_ms, 500);
        assert_eq!(c.selection.kd_max_features, 5);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn rejects_bad_weights_and_unknown_keys() {
        assert!(matches!(
            Config::parse("weights = 0.5, 0.5, 0.5, 0.5"),
            Err(Error::InvalidWeights(_))
        ));
        assert!(Config::parse("weights = 0.5, 0.5").is_err());
        match Config::parse("k = 5\nbogus = 1") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected config error, got {other:?}"),
        }
        assert!(Config::parse("k = 0").is_err());
        assert!(Config::parse("no equals sign").is_err());
        assert!(Config::parse("trace_pattern = (").is_err());
    }
}
