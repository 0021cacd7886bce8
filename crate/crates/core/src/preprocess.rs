//! Feature-token documents from raw bug reports.
//!
//! Summary text, any stack trace found in the description and the
//! characteristic fields (priority, severity, ...) are all folded into the
//! summary document, so the trace and characteristics count twice towards the
//! summary block weight.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::BugReport;
use crate::error::{Error, Result};

/// Default frame grammar: Java, gdb, C-style and Python frames.
pub const DEFAULT_TRACE_PATTERNS: [&str; 4] = [
    r"^\s*at\s+[\w$.<>/\-]+\s*\([^()]*:\d+\)\s*$",
    r"^\s*#\d+\s+(?:0x[0-9a-fA-F]+\s+)?in\s+\S+",
    r"^\s*[\w:.~<>$]+\s*\([^()]*\)\s+at\s+\S+:\d+\s*$",
    r#"^\s*File\s+"[^"]+",\s+line\s+\d+"#,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedReport {
    pub id: String,
    pub doc_summary: Vec<String>,
    pub doc_description: Vec<String>,
    pub component: String,
    pub platform: BTreeMap<String, String>,
}

fn is_token_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || matches!(c, '_' | '.' | '/' | ':' | '-')
}

fn is_edge_punct(c: char) -> bool {
    matches!(c, '.' | '/' | ':' | '-')
}

/// Drops a trailing `:<line>` or `:<line>:<col>` location suffix.
fn strip_location(mut token: &str) -> &str {
    for _ in 0..2 {
        match token.rsplit_once(':') {
            Some((head, tail)) if !head.is_empty() && !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => {
                token = head;
            }
            _ => break,
        }
    }
    token
}

/// Lowercases and splits on anything outside `[a-z0-9_./:-]`.
///
/// Separator punctuation at token edges is trimmed (`boot.` becomes `boot`) and
/// source-location suffixes are removed (`f.java:12` becomes `f.java`).
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !is_token_char(c))
        .map(|raw| strip_location(raw.trim_matches(is_edge_punct)).trim_matches(is_edge_punct))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn is_hex_address(token: &str) -> bool {
    token
        .strip_prefix("0x")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_hexdigit()))
}

/// Keeps alpha and alphanumeric tokens; drops numbers, hex addresses and
/// single characters.
pub fn filter_feature_tokens(tokens: Vec<String>) -> Vec<String> {
    tokens.into_iter().filter(|t| is_feature_token(t)).collect()
}

pub fn is_feature_token(token: &str) -> bool {
    token.chars().count() > 1 && token.chars().any(|c| c.is_alphabetic()) && !is_hex_address(token)
}

/// Tokenizer plus stack-trace extractor with a configurable frame grammar.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    frame_patterns: Vec<Regex>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::with_patterns(DEFAULT_TRACE_PATTERNS).expect("default trace patterns compile")
    }
}

impl Preprocessor {
    pub fn with_patterns<I, S>(patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let frame_patterns = patterns
            .into_iter()
            .map(|p| {
                Regex::new(p.as_ref()).map_err(|source| Error::Pattern {
                    pattern: p.as_ref().to_string(),
                    source,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { frame_patterns })
    }

    fn is_frame(&self, line: &str) -> bool {
        self.frame_patterns.iter().any(|re| re.is_match(line))
    }

    /// Returns every frame line that belongs to a run of at least two
    /// consecutive frame lines, joined with newlines.
    pub fn extract_stack_trace(&self, description: &str) -> Option<String> {
        let mut frames: Vec<&str> = Vec::new();
        let mut run: Vec<&str> = Vec::new();
        for line in description.lines().chain(std::iter::once("")) {
            if self.is_frame(line) {
                run.push(line.trim());
                continue;
            }
            if run.len() >= 2 {
                frames.append(&mut run);
            }
            run.clear();
        }
        (!frames.is_empty()).then(|| frames.join("\n"))
    }

    pub fn build_document(&self, report: &BugReport) -> Result<ProcessedReport> {
        if report.summary.trim().is_empty() {
            return Err(Error::EmptySummary(report.id.clone()));
        }
        let mut doc_summary = filter_feature_tokens(tokenize(&report.summary));
        if let Some(trace) = self.extract_stack_trace(&report.description) {
            doc_summary.extend(filter_feature_tokens(tokenize(&trace)));
        }
        // BTreeMap iterates in sorted key order.
        let characteristics: Vec<&str> = report.characteristics.values().map(String::as_str).collect();
        doc_summary.extend(filter_feature_tokens(tokenize(&characteristics.join(" "))));

        Ok(ProcessedReport {
            id: report.id.clone(),
            doc_summary,
            doc_description: filter_feature_tokens(tokenize(&report.description)),
            component: report.component.clone(),
            platform: report.platform.clone(),
        })
    }
}
