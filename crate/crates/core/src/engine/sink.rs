//! Result records and the sinks that receive them.
//!
//! The JSONL stream holds one record per line, tagged by `type`:
//!
//! ```text
//! {"type":"header","version":1,"fingerprint":"…","strategy":"merged",…}
//! {"type":"event","predicate":[["Occupation","CS&Math"]],"agg1":92.5,…}
//! {"type":"summary","combos_searched":3,…}
//! {"type":"footer","s_full":{"coverage":0.9,…}}
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::aggregate::Combo;
use crate::claim::Refinement;
use crate::dataset::Dataset;
use crate::error::SinkError;
use crate::measures::{Measure, MeasureVector, ScoreKey};

pub const RECORD_VERSION: u32 = 1;

/// One refinement as found by the engine.
#[derive(Debug, Clone)]
pub struct ResultEvent {
    pub refinement: Refinement,
    pub scores: MeasureVector,
    pub elapsed: Duration,
    /// Position of the combination in the run's order.
    pub combo_index: usize,
    pub combo: Combo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub version: u32,
    /// Task fingerprint; logs are only comparable under equal fingerprints.
    pub fingerprint: String,
    pub dataset_fingerprint: String,
    pub strategy: String,
    pub seed: u64,
    pub k: usize,
    pub m: usize,
    pub min_group: usize,
    pub measures: Vec<Measure>,
    pub generality: bool,
    pub combos_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// `[attribute, value]` pairs with stored values.
    pub predicate: Vec<(String, String)>,
    pub agg1: f64,
    pub agg2: f64,
    pub n1: usize,
    pub n2: usize,
    pub scores: MeasureVector,
    pub elapsed_ms: f64,
    pub combo_index: usize,
}

impl EventRecord {
    pub fn new(event: &ResultEvent, dataset: &Dataset) -> Self {
        let r = &event.refinement;
        Self {
            predicate: r.predicate().named_pairs(dataset),
            agg1: r.agg1(),
            agg2: r.agg2(),
            n1: r.n1(),
            n2: r.n2(),
            scores: event.scores,
            elapsed_ms: event.elapsed.as_secs_f64() * 1000.0,
            combo_index: event.combo_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Completed,
    Deadline,
    EarlyStop,
    SinkError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopItem {
    pub predicate: Vec<(String, String)>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub sum: f64,
    pub items: Vec<TopItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub combos_searched: usize,
    pub combos_total: usize,
    pub refinements_found: usize,
    pub elapsed_ms: f64,
    pub stop_reason: StopReason,
    pub generality: bool,
    pub topk: BTreeMap<ScoreKey, TopKReport>,
}

impl RunSummary {
    /// Per-key sums of the final top-k.
    pub fn sums(&self) -> BTreeMap<ScoreKey, f64> {
        self.topk.iter().map(|(&k, r)| (k, r.sum)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub s_full: BTreeMap<ScoreKey, f64>,
}

/// A line of the JSONL stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Record {
    Header(RunHeader),
    Event(EventRecord),
    Summary(RunSummary),
    Footer(Footer),
}

/// Receives a run's output. Called from the engine's coordinating thread
/// only.
pub trait Sink {
    fn header(&mut self, _header: &RunHeader) -> Result<(), SinkError> {
        Ok(())
    }

    fn event(&mut self, event: &ResultEvent, record: &EventRecord) -> Result<(), SinkError>;

    fn summary(&mut self, _summary: &RunSummary) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Writes each record as one JSON line and flushes it, so a partial stream
/// stays parseable line by line.
#[derive(Debug)]
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &Record) -> Result<(), SinkError> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> Sink for JsonlSink<W> {
    fn header(&mut self, header: &RunHeader) -> Result<(), SinkError> {
        self.write(&Record::Header(header.clone()))
    }

    fn event(&mut self, _event: &ResultEvent, record: &EventRecord) -> Result<(), SinkError> {
        self.write(&Record::Event(record.clone()))
    }

    fn summary(&mut self, summary: &RunSummary) -> Result<(), SinkError> {
        self.write(&Record::Summary(summary.clone()))
    }
}

/// Keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct CollectSink {
    pub header: Option<RunHeader>,
    pub events: Vec<ResultEvent>,
    pub records: Vec<EventRecord>,
    pub summary: Option<RunSummary>,
}

impl Sink for CollectSink {
    fn header(&mut self, header: &RunHeader) -> Result<(), SinkError> {
        self.header = Some(header.clone());
        Ok(())
    }

    fn event(&mut self, event: &ResultEvent, record: &EventRecord) -> Result<(), SinkError> {
        self.events.push(event.clone());
        self.records.push(record.clone());
        Ok(())
    }

    fn summary(&mut self, summary: &RunSummary) -> Result<(), SinkError> {
        self.summary = Some(summary.clone());
        Ok(())
    }
}

/// Parses a JSONL stream, rejecting any malformed line.
pub fn read_records(text: &str) -> Result<Vec<Record>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}
