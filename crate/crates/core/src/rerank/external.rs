//! Adapter for an out-of-process pair encoder.
//!
//! Wire protocol, one HTTP POST per pair:
//!
//! ```text
//! request:  {"text_a": "<flattened report a>", "text_b": "<flattened report b>"}
//! response: {"label": "duplicate" | "distinct", "score": <number in [0, 1]>}
//! ```
//!
//! Each side is built by [`crate::vectorize::document_text`] and capped at 512
//! tokens.

use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PairLabel;
use crate::error::{Error, Result};
use crate::preprocess::ProcessedReport;
use crate::vectorize::pair_text;

pub const DEFAULT_ENCODER_TIMEOUT_MS: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_ENCODER_TIMEOUT_MS
}

#[derive(Serialize)]
struct PairRequest<'a> {
    text_a: &'a str,
    text_b: &'a str,
}

#[derive(Deserialize)]
struct PairResponse {
    label: PairLabel,
    score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "EncoderConfig", into = "EncoderConfig")]
pub struct ExternalEncoder {
    config: EncoderConfig,
    client: OnceLock<reqwest::blocking::Client>,
}

impl From<EncoderConfig> for ExternalEncoder {
    fn from(config: EncoderConfig) -> Self {
        Self::new(config)
    }
}

impl From<ExternalEncoder> for EncoderConfig {
    fn from(e: ExternalEncoder) -> Self {
        e.config
    }
}

impl ExternalEncoder {
    pub fn new(config: EncoderConfig) -> Self {
        Self {
            config,
            client: OnceLock::new(),
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn client(&self) -> Result<&reqwest::blocking::Client> {
        if let Some(client) = self.client.get() {
            return Ok(client);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.config.timeout_ms))
            .build()
            .map_err(|e| Error::Encoder(e.to_string()))?;
        Ok(self.client.get_or_init(|| client))
    }

    /// Must not be called from inside an async runtime; the client blocks.
    pub fn classify(&self, a: &ProcessedReport, b: &ProcessedReport) -> Result<(PairLabel, f64)> {
        let (text_a, text_b) = pair_text(a, b);
        let response = self
            .client()?
            .post(&self.config.endpoint)
            .json(&PairRequest {
                text_a: &text_a,
                text_b: &text_b,
            })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::Encoder(e.to_string()))?;
        let body: PairResponse = response.json().map_err(|e| Error::Encoder(e.to_string()))?;
        if !(0.0..=1.0).contains(&body.score) {
            return Err(Error::Encoder(format!("score {} outside [0, 1]", body.score)));
        }
        Ok((body.label, body.score))
    }
}
