//! Event and batch data model plus JSON-lines ingestion.
//!
//! A batch file is newline-delimited JSON: an optional header line carrying
//! batch metadata followed by one event per line. The event line schema is
//!
//! ```text
//! {"probe": "filldir64", "dir": "enter", "pid": 1234, "tgid": 1234, "t_ns": 81273491}
//! ```
//!
//! and the header line schema is
//!
//! ```text
//! {"batch_id": "default-normal-000", "label": "normal", "scenario": "default"}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Whether a probe fired at the enter or return point of its function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Enter,
    Return,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Enter => "enter",
            Direction::Return => "return",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class of a batch: collected during normal operation or with a rootkit active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Rootkit,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Rootkit => "rootkit",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "rootkit" => Ok(Label::Rootkit),
            other => Err(Error::InvalidArgument(format!(
                "unknown label {other:?} (expected \"normal\" or \"rootkit\")"
            ))),
        }
    }
}

/// Collection environment a batch was recorded under.
///
/// The five named variants cover the standard collection setups; anything
/// else round-trips as a free-form string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scenario {
    Default,
    FileCount,
    FilenameLength,
    LsBasic,
    SystemLoad,
    Custom(String),
}

impl Scenario {
    pub fn as_str(&self) -> &str {
        match self {
            Scenario::Default => "default",
            Scenario::FileCount => "file-count",
            Scenario::FilenameLength => "filename-length",
            Scenario::LsBasic => "ls-basic",
            Scenario::SystemLoad => "system-load",
            Scenario::Custom(s) => s,
        }
    }

    pub fn parse(s: &str) -> Scenario {
        match s {
            "default" => Scenario::Default,
            "file-count" => Scenario::FileCount,
            "filename-length" => Scenario::FilenameLength,
            "ls-basic" => Scenario::LsBasic,
            "system-load" => Scenario::SystemLoad,
            other => Scenario::Custom(other.to_string()),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Scenario {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Scenario::parse(&s))
    }
}

/// One timestamped observation from a named probe, attributed to a process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeEvent {
    /// Traced kernel function, e.g. `"filldir64"`.
    pub probe_name: String,
    pub direction: Direction,
    pub pid: u32,
    pub tgid: u32,
    /// Monotonic clock reading in nanoseconds; always greater than zero.
    pub timestamp_ns: u64,
    /// 0-based sequence number in file order, assigned at ingestion.
    pub arrival_index: u64,
}

impl ProbeEvent {
    pub fn probe_id(&self) -> ProbeId {
        ProbeId {
            name: self.probe_name.clone(),
            direction: self.direction,
        }
    }
}

/// A probe identity: function name plus enter/return side.
///
/// The canonical rendering is `<name>-enter` or `<name>-return`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProbeId {
    pub name: String,
    pub direction: Direction,
}

impl ProbeId {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        ProbeId {
            name: name.into(),
            direction,
        }
    }

    pub fn enter(name: impl Into<String>) -> Self {
        ProbeId::new(name, Direction::Enter)
    }

    pub fn ret(name: impl Into<String>) -> Self {
        ProbeId::new(name, Direction::Return)
    }
}

impl fmt::Display for ProbeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.name, self.direction)
    }
}

impl FromStr for ProbeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_suffix("-enter") {
            if !name.is_empty() {
                return Ok(ProbeId::enter(name));
            }
        }
        if let Some(name) = s.strip_suffix("-return") {
            if !name.is_empty() {
                return Ok(ProbeId::ret(name));
            }
        }
        Err(Error::InvalidArgument(format!(
            "invalid probe id {s:?} (expected \"<name>-enter\" or \"<name>-return\")"
        )))
    }
}

impl Serialize for ProbeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProbeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Wire form of one event line.
#[derive(Serialize, Deserialize)]
struct EventLine {
    probe: String,
    dir: Direction,
    pid: u32,
    tgid: u32,
    t_ns: u64,
}

/// Wire form of the batch header line.
#[derive(Serialize, Deserialize)]
struct HeaderLine {
    batch_id: String,
    label: Label,
    scenario: Scenario,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    start_time: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    end_time: Option<String>,
}

/// A labeled, scenario-tagged collection of events from one collection run.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub batch_id: String,
    pub label: Label,
    pub scenario: Scenario,
    /// Wall-clock collection bounds; metadata only, never interpreted.
    pub start_time: Option<String>,
    pub end_time: Option<String>,
    /// Events in file order; `arrival_index` is strictly increasing.
    pub events: Vec<ProbeEvent>,
}

impl Batch {
    pub fn new(batch_id: impl Into<String>, label: Label, scenario: Scenario) -> Self {
        Batch {
            batch_id: batch_id.into(),
            label,
            scenario,
            start_time: None,
            end_time: None,
            events: Vec::new(),
        }
    }

    /// Batches with fewer than two events carry no delta information and are
    /// skipped by downstream stages.
    pub fn is_usable(&self) -> bool {
        self.events.len() >= 2
    }

    /// Serializes to the canonical JSON-lines form: header line, then one
    /// event per line, trailing newline included.
    pub fn to_jsonl(&self) -> String {
        let header = HeaderLine {
            batch_id: self.batch_id.clone(),
            label: self.label,
            scenario: self.scenario.clone(),
            start_time: self.start_time.clone(),
            end_time: self.end_time.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for event in &self.events {
            let line = EventLine {
                probe: event.probe_name.clone(),
                dir: event.direction,
                pid: event.pid,
                tgid: event.tgid,
                t_ns: event.timestamp_ns,
            };
            out.push_str(&serde_json::to_string(&line).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Parses the canonical JSON-lines form.
    ///
    /// The header line is optional; when absent, `fallback_id` names the
    /// batch and the label defaults to `Normal` with the `Default` scenario.
    /// `origin` is used in error messages only.
    pub fn from_jsonl_str(text: &str, origin: &Path, fallback_id: &str) -> Result<Batch> {
        let mut batch = Batch::new(fallback_id, Label::Normal, Scenario::Default);
        let mut arrival_index = 0u64;
        let mut saw_header = false;

        for (line_no, line) in text.lines().enumerate() {
            let line_no = line_no + 1;
            if line.trim().is_empty() {
                continue;
            }
            if line_no == 1 {
                if let Ok(header) = serde_json::from_str::<HeaderLine>(line) {
                    batch.batch_id = header.batch_id;
                    batch.label = header.label;
                    batch.scenario = header.scenario;
                    batch.start_time = header.start_time;
                    batch.end_time = header.end_time;
                    saw_header = true;
                    continue;
                }
            }
            let event: EventLine = serde_json::from_str(line).map_err(|e| {
                let mut msg = e.to_string();
                if !saw_header && line_no == 1 {
                    msg.push_str(" (line also failed to parse as a batch header)");
                }
                Error::MalformedLine {
                    path: origin.to_path_buf(),
                    line: line_no,
                    msg,
                }
            })?;
            if event.probe.is_empty() {
                return Err(Error::MalformedLine {
                    path: origin.to_path_buf(),
                    line: line_no,
                    msg: "probe name is empty".into(),
                });
            }
            if event.t_ns == 0 {
                return Err(Error::MalformedLine {
                    path: origin.to_path_buf(),
                    line: line_no,
                    msg: "t_ns must be greater than zero".into(),
                });
            }
            batch.events.push(ProbeEvent {
                probe_name: event.probe,
                direction: event.dir,
                pid: event.pid,
                tgid: event.tgid,
                timestamp_ns: event.t_ns,
                arrival_index,
            });
            arrival_index += 1;
        }

        debug_assert!(
            batch
                .events
                .windows(2)
                .all(|w| w[0].arrival_index < w[1].arrival_index),
            "arrival indices must be strictly increasing by construction"
        );
        Ok(batch)
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "batch".to_string())
}

/// Reads a batch file, forcing the given label and scenario.
///
/// The caller's label and scenario override whatever the file header says;
/// manifests are the source of truth for labeling. Events are kept in file
/// order and numbered 0-based; no reordering happens at ingestion.
pub fn ingest_batch(path: &Path, label: Label, scenario: Scenario) -> Result<Batch> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut batch = Batch::from_jsonl_str(&text, path, &file_stem(path))?;
    batch.label = label;
    batch.scenario = scenario;
    if !batch.is_usable() {
        log::warn!(
            "batch {:?} from {} has {} event(s); marked unusable",
            batch.batch_id,
            path.display(),
            batch.events.len()
        );
    }
    Ok(batch)
}

/// Reads a batch file, trusting the header line for label and scenario.
pub fn read_batch(path: &Path) -> Result<Batch> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Batch::from_jsonl_str(&text, path, &file_stem(path))
}

/// One manifest row: where a batch lives and how it is labeled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub batch_id: String,
    /// Batch file location, resolved relative to the manifest file.
    pub path: String,
    pub label: Label,
    pub scenario: Scenario,
}

/// An ordered list of batch files; manifest order is the chronological order
/// used by online detection.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.check_unique_ids()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.entries)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for entry in &self.entries {
            if !seen.insert(entry.batch_id.as_str()) {
                return Err(Error::DuplicateBatchId(entry.batch_id.clone()));
            }
        }
        Ok(())
    }
}

/// Loads every batch referenced by a manifest, in manifest order.
///
/// Each entry's label, scenario, and batch id override the batch file's own
/// header. Relative paths resolve against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<Batch>> {
    let manifest = DatasetManifest::load(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut batches = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let mut file = PathBuf::from(&entry.path);
        if file.is_relative() {
            file = base.join(file);
        }
        if !file.exists() {
            return Err(Error::MissingBatchFile {
                batch_id: entry.batch_id.clone(),
                path: file,
            });
        }
        let mut batch = ingest_batch(&file, entry.label, entry.scenario.clone())?;
        batch.batch_id = entry.batch_id.clone();
        batches.push(batch);
    }
    Ok(batches)
}

/// Number of events per probe; diagnostics only, never used for detection.
pub fn event_counts(batch: &Batch) -> BTreeMap<ProbeId, u64> {
    let mut counts = BTreeMap::new();
    for event in &batch.events {
        *counts.entry(event.probe_id()).or_insert(0) += 1;
    }
    counts
}
