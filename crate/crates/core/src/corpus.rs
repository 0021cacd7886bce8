//! Bug-report ingestion, duplicate-link resolution and train/test splitting.
//!
//! Two input formats are accepted. JSONL carries one object per line:
//!
//! | field             | type                 | default     |
//! |-------------------|----------------------|-------------|
//! | `id`              | string, required     |             |
//! | `summary`         | string, required     |             |
//! | `description`     | string               | `""`        |
//! | `component`       | string               | `"UNKNOWN"` |
//! | `platform`        | object string→string | `{}`        |
//! | `characteristics` | object string→string | `{}`        |
//! | `dup_of`          | string or null       | null        |
//! | `created_at`      | RFC-3339 string      | epoch       |
//!
//! CSV uses the same column names with a header row; `platform` and
//! `characteristics` are written as `k1=v1;k2=v2` and an empty `dup_of` cell
//! means no link.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_COMPONENT: &str = "UNKNOWN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub summary: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_component")]
    pub component: String,
    #[serde(default)]
    pub platform: BTreeMap<String, String>,
    #[serde(default)]
    pub characteristics: BTreeMap<String, String>,
    #[serde(default)]
    pub dup_of: Option<String>,
    #[serde(default = "epoch")]
    pub created_at: DateTime<Utc>,
}

fn default_component() -> String {
    DEFAULT_COMPONENT.to_string()
}

fn epoch() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

impl BugReport {
    /// A report with only the required fields set.
    pub fn new(id: impl Into<String>, summary: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            summary: summary.into(),
            description: String::new(),
            component: default_component(),
            platform: BTreeMap::new(),
            characteristics: BTreeMap::new(),
            dup_of: None,
            created_at: epoch(),
        }
    }

    pub fn is_duplicate(&self) -> bool {
        self.dup_of.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidInput(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Audit trail of link repairs made while building a collection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    /// `(report id, missing target)` for every `dup_of` that named no report.
    pub dangling: Vec<(String, String)>,
    /// Reports whose `dup_of` named themselves.
    pub self_links: Vec<String>,
}

impl LoadReport {
    pub fn cleared(&self) -> usize {
        self.dangling.len() + self.self_links.len()
    }
}

/// An ordered, id-indexed set of bug reports. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct ReportCollection {
    reports: Vec<BugReport>,
    index_by_id: HashMap<String, usize>,
}

impl ReportCollection {
    /// Validates ids and clears `dup_of` links that cannot be honoured.
    pub fn new(mut reports: Vec<BugReport>) -> Result<(Self, LoadReport)> {
        let mut index_by_id = HashMap::with_capacity(reports.len());
        for (pos, report) in reports.iter().enumerate() {
            if report.id.is_empty() {
                return Err(Error::InvalidInput(format!("report at position {pos} has an empty id")));
            }
            if index_by_id.insert(report.id.clone(), pos).is_some() {
                return Err(Error::DuplicateId(report.id.clone()));
            }
        }

        let mut load = LoadReport::default();
        for report in &mut reports {
            let Some(target) = report.dup_of.as_deref() else {
                continue;
            };
            if target == report.id {
                load.self_links.push(report.id.clone());
                report.dup_of = None;
            } else if !index_by_id.contains_key(target) {
                load.dangling.push((report.id.clone(), target.to_string()));
                report.dup_of = None;
            }
        }
        for (id, target) in &load.dangling {
            tracing::warn!(%id, %target, "cleared dangling duplicate link");
        }

        Ok((Self { reports, index_by_id }, load))
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn reports(&self) -> &[BugReport] {
        &self.reports
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BugReport> {
        self.reports.iter()
    }

    pub fn get(&self, id: &str) -> Option<&BugReport> {
        self.index_by_id.get(id).map(|&pos| &self.reports[pos])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index_by_id.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index_by_id.contains_key(id)
    }

    pub fn duplicate_links(&self) -> usize {
        self.reports.iter().filter(|r| r.is_duplicate()).count()
    }

    /// Reports that carry no `dup_of` link: parents and uniques.
    pub fn originals(&self) -> impl Iterator<Item = &BugReport> {
        self.reports.iter().filter(|r| !r.is_duplicate())
    }

    /// Follows `dup_of` links to the root report.
    pub fn resolve_parent<'a>(&'a self, id: &'a str) -> Result<&'a str> {
        let mut current = self.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
        let mut path: Vec<&str> = vec![&current.id];
        while let Some(next) = current.dup_of.as_deref() {
            if let Some(start) = path.iter().position(|seen| *seen == next) {
                let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(next.to_string());
                return Err(Error::Cycle(cycle));
            }
            current = self.get(next).ok_or_else(|| Error::UnknownId(next.to_string()))?;
            path.push(&current.id);
        }
        Ok(&current.id)
    }

    /// Keeps only `ids`, rewriting every surviving `dup_of` to its resolved root
    /// so links stay valid when intermediate children are dropped.
    pub fn restricted(&self, ids: &BTreeSet<String>) -> Result<Self> {
        let mut kept = Vec::with_capacity(ids.len());
        for report in &self.reports {
            if !ids.contains(&report.id) {
                continue;
            }
            let mut report = report.clone();
            if report.dup_of.is_some() {
                let root = self.resolve_parent(&report.id)?;
                report.dup_of = if ids.contains(root) {
                    Some(root.to_string())
                } else {
                    None
                };
            }
            kept.push(report);
        }
        Ok(Self::new(kept)?.0)
    }
}

impl<'a> IntoIterator for &'a ReportCollection {
    type Item = &'a BugReport;
    type IntoIter = std::slice::Iter<'a, BugReport>;

    fn into_iter(self) -> Self::IntoIter {
        self.reports.iter()
    }
}

pub fn load_corpus(path: &Path, format: Format) -> Result<(ReportCollection, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reports = match format {
        Format::Jsonl => read_jsonl(BufReader::new(file), path)?,
        Format::Csv => read_csv(BufReader::new(file))?,
    };
    ReportCollection::new(reports)
}

/// Writes the collection as canonical JSONL, one report per line.
pub fn write_jsonl(collection: &ReportCollection, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for report in collection {
        serde_json::to_writer(&mut out, report)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Permissive mirror of [`BugReport`] so missing fields get line-numbered errors.
#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    summary: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    component: Option<String>,
    #[serde(default)]
    platform: Option<BTreeMap<String, String>>,
    #[serde(default)]
    characteristics: Option<BTreeMap<String, String>>,
    #[serde(default)]
    dup_of: Option<String>,
    #[serde(default)]
    created_at: Option<String>,
}

impl RawRecord {
    fn into_report(self, line: usize) -> Result<BugReport> {
        let malformed = |reason: &str| Error::MalformedRecord {
            line,
            reason: reason.to_string(),
        };
        let id = self
            .id
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed("missing id"))?;
        let summary = self
            .summary
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| malformed("missing summary"))?;
        let created_at = match self.created_at.as_deref() {
            None | Some("") => epoch(),
            Some(ts) => DateTime::parse_from_rfc3339(ts)
                .map_err(|e| malformed(&format!("bad created_at {ts:?}: {e}")))?
                .with_timezone(&Utc),
        };
        Ok(BugReport {
            id,
            summary,
            description: self.description.unwrap_or_default(),
            component: self
                .component
                .filter(|c| !c.is_empty())
                .unwrap_or_else(default_component),
            platform: self.platform.unwrap_or_default(),
            characteristics: self.characteristics.unwrap_or_default(),
            dup_of: self.dup_of.filter(|d| !d.is_empty()),
            created_at,
        })
    }
}

/// Parses one report object from a query or submission. `id` may be omitted,
/// in which case `fallback_id` is used; `dup_of` is ignored.
pub fn parse_draft(json: &str, fallback_id: &str) -> Result<BugReport> {
    let mut raw: RawRecord = serde_json::from_str(json).map_err(|e| Error::MalformedRecord {
        line: 1,
        reason: e.to_string(),
    })?;
    if raw.id.as_deref().is_none_or(str::is_empty) {
        raw.id = Some(fallback_id.to_string());
    }
    raw.dup_of = None;
    raw.into_report(1)
}

fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<Vec<BugReport>> {
    let mut reports = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        reports.push(raw.into_report(line_no)?);
    }
    Ok(reports)
}

fn read_csv(reader: impl std::io::Read) -> Result<Vec<BugReport>> {
    let mut csv = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let cols = [
        "id",
        "summary",
        "description",
        "component",
        "platform",
        "characteristics",
        "dup_of",
        "created_at",
    ]
    .map(column);

    let mut reports = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| Error::MalformedRecord {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = |i: usize| cols[i].and_then(|c| record.get(c)).map(str::to_string);
        let raw = RawRecord {
            id: cell(0),
            summary: cell(1),
            description: cell(2),
            component: cell(3),
            platform: cell(4).map(|s| parse_pairs(&s, line)).transpose()?,
            characteristics: cell(5).map(|s| parse_pairs(&s, line)).transpose()?,
            dup_of: cell(6),
            created_at: cell(7),
        };
        reports.push(raw.into_report(line)?);
    }
    Ok(reports)
}

/// Parses `k1=v1;k2=v2`.
fn parse_pairs(cell: &str, line: usize) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for part in cell.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::MalformedRecord {
            line,
            reason: format!("expected key=value, got {part:?}"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Held-out duplicate children and the reports that stay searchable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: BTreeSet<String>,
    /// `(child, resolved root)` in collection order.
    pub test_pairs: Vec<(String, String)>,
}

impl SplitSpec {
    pub fn check_invariants(&self) -> Result<()> {
        for (child, parent) in &self.test_pairs {
            if child == parent {
                return Err(Error::InvalidInput(format!("test pair maps {child:?} to itself")));
            }
            if self.train_ids.contains(child) {
                return Err(Error::InvalidInput(format!("test child {child:?} is also in train")));
            }
            if !self.train_ids.contains(parent) {
                return Err(Error::InvalidInput(format!("test parent {parent:?} is not in train")));
            }
        }
        Ok(())
    }
}

/// Holds out a seeded random `holdout_fraction` of duplicate children; every
/// other report, including all parents and uniques, goes to training.
pub fn split_train_test(collection: &ReportCollection, holdout_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "holdout fraction {holdout_fraction} outside (0, 1)"
        )));
    }
    let children: Vec<&str> = collection
        .iter()
        .filter(|r| r.is_duplicate())
        .map(|r| r.id.as_str())
        .collect();
    if children.is_empty() {
        return Err(Error::NoDuplicates);
    }

    let n_test = ((children.len() as f64 * holdout_fraction).round() as usize).clamp(1, children.len());
    let mut shuffled = children.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held: HashSet<&str> = shuffled[..n_test].iter().copied().collect();

    let mut test_pairs = Vec::with_capacity(n_test);
    for child in &children {
        if held.contains(child) {
            let root = collection.resolve_parent(child)?;
            test_pairs.push((child.to_string(), root.to_string()));
        }
    }
    let train_ids = collection
        .iter()
        .filter(|r| !held.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();

    let split = SplitSpec { train_ids, test_pairs };
    debug_assert!(split.check_invariants().is_ok());
    Ok(split)
}
