//! Score recall over time against an exhaustive run, and strategy
//! comparisons.
//!
//! The score recall of a partial run under a score key is the sum of its
//! top-k scores divided by the exhaustive run's sum (`S_full`). With
//! `S_full = 0` recall is defined as 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::claim::Predicate;
use crate::engine::{
    read_records, CollectSink, ComboClock, Engine, EngineOptions, EventRecord, Record, ResultEvent, RunHeader,
    RunSummary, TopK,
};
use crate::error::EvalError;
use crate::measures::{MeasureVector, ScoreKey};
use crate::prioritize::{build_order, PlanContext, Strategy};

pub const RECALL_THRESHOLD: f64 = 0.95;

/// Result of a complete, unprioritized run.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub header: RunHeader,
    pub s_full: BTreeMap<ScoreKey, f64>,
    pub events: Vec<ResultEvent>,
    pub records: Vec<EventRecord>,
    pub summary: RunSummary,
}

/// Searches every combination in enumeration order.
pub fn exhaustive(ctx: &PlanContext) -> Result<Oracle, EvalError> {
    let mut order = build_order(&Strategy::Exhaustive, ctx, 0)?;
    let mut task = ctx.task.clone();
    task.config.deadline_ms = None;
    let engine = Engine::new(ctx.dataset, &task, ctx.cache, ctx.embeddings, EngineOptions::default());
    let mut sink = CollectSink::default();
    let summary = engine
        .run(order.as_mut(), &mut sink, &ComboClock::millis())
        .map_err(Box::new)?;
    Ok(Oracle {
        header: sink.header.expect("engine writes a header"),
        s_full: summary.sums(),
        events: sink.events,
        records: sink.records,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub elapsed_ms: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub s_full: BTreeMap<ScoreKey, f64>,
    /// Step points per key, starting at elapsed 0.
    pub points: BTreeMap<ScoreKey, Vec<RecallPoint>>,
}

impl RecallCurve {
    /// First elapsed time at which recall reaches `threshold`.
    pub fn time_to(&self, key: ScoreKey, threshold: f64) -> Option<f64> {
        self.points
            .get(&key)?
            .iter()
            .find(|p| p.recall >= threshold)
            .map(|p| p.elapsed_ms)
    }

    pub fn final_recall(&self, key: ScoreKey) -> Option<f64> {
        self.points.get(&key)?.last().map(|p| p.recall)
    }

    pub fn time_to_threshold(&self, threshold: f64) -> BTreeMap<ScoreKey, Option<f64>> {
        self.points.keys().map(|&k| (k, self.time_to(k, threshold))).collect()
    }
}

fn recall(sum: f64, full: f64) -> f64 {
    if full <= 0.0 {
        1.0
    } else {
        (sum / full).min(1.0)
    }
}

/// Replays events in elapsed order, tracking top-k sums per key of `s_full`.
/// Events only need scores and times; predicates are kept for tie-breaking
/// in the top-k sets.
pub fn recall_curve(events: &[(Predicate, MeasureVector, f64)], s_full: &BTreeMap<ScoreKey, f64>, k: usize) -> RecallCurve {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].2.total_cmp(&events[b].2).then(a.cmp(&b)));
    let mut topk = TopK::new(k, s_full.keys().copied());
    let mut points: BTreeMap<ScoreKey, Vec<RecallPoint>> = s_full
        .iter()
        .map(|(&key, &full)| {
            (
                key,
                vec![RecallPoint {
                    elapsed_ms: 0.0,
                    recall: recall(0.0, full),
                }],
            )
        })
        .collect();
    for i in order {
        let (p, scores, t) = &events[i];
        if !topk.offer(p, scores) {
            continue;
        }
        for (&key, &full) in s_full {
            let r = recall(topk.sum(key), full);
            let series = points.get_mut(&key).expect("key present");
            let last = series.last().expect("non-empty");
            if r > last.recall {
                if last.elapsed_ms == *t {
                    series.pop();
                }
                series.push(RecallPoint { elapsed_ms: *t, recall: r });
            }
        }
    }
    RecallCurve {
        s_full: s_full.clone(),
        points,
    }
}

/// Recall curve of an in-memory run.
pub fn recall_of_events(events: &[ResultEvent], s_full: &BTreeMap<ScoreKey, f64>, k: usize) -> RecallCurve {
    let replay: Vec<_> = events
        .iter()
        .map(|e| (e.refinement.predicate().clone(), e.scores, e.elapsed.as_secs_f64() * 1000.0))
        .collect();
    recall_curve(&replay, s_full, k)
}

/// A parsed JSONL stream.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub header: Option<RunHeader>,
    pub events: Vec<EventRecord>,
    pub summary: Option<RunSummary>,
    pub s_full: Option<BTreeMap<ScoreKey, f64>>,
}

impl EventLog {
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut log = EventLog::default();
        for record in read_records(text).map_err(|(line, message)| EvalError::Log { line, message })? {
            match record {
                Record::Header(h) => log.header = Some(h),
                Record::Event(e) => log.events.push(e),
                Record::Summary(s) => log.summary = Some(s),
                Record::Footer(f) => log.s_full = Some(f.s_full),
            }
        }
        Ok(log)
    }

    /// Events as replay input. Predicates are rebuilt from their textual
    /// pairs so ties order the same way across logs.
    fn replay(&self) -> Vec<(Predicate, MeasureVector, f64)> {
        let mut names: BTreeMap<(String, String), u32> = BTreeMap::new();
        self.events
            .iter()
            .map(|e| {
                let atoms = e
                    .predicate
                    .iter()
                    .map(|pair| {
                        let next = names.len() as u32;
                        let id = *names.entry(pair.clone()).or_insert(next);
                        crate::claim::Atom::new(crate::dataset::AttrId(id), 0)
                    })
                    .collect();
                (Predicate::new(atoms).unwrap_or_default(), e.scores, e.elapsed_ms)
            })
            .collect()
    }
}

/// Recall of a logged run against an oracle log carrying an `s_full`
/// footer. Both logs must come from the same task.
pub fn recall_from_logs(log: &EventLog, oracle: &EventLog) -> Result<RecallCurve, EvalError> {
    let (Some(lh), Some(oh)) = (&log.header, &oracle.header) else {
        return Err(EvalError::Log {
            line: 1,
            message: "missing header record".into(),
        });
    };
    if lh.fingerprint != oh.fingerprint {
        return Err(EvalError::FingerprintMismatch {
            log: lh.fingerprint.clone(),
            oracle: oh.fingerprint.clone(),
        });
    }
    let s_full = oracle.s_full.clone().or_else(|| oracle.summary.as_ref().map(RunSummary::sums)).ok_or_else(|| {
        EvalError::Log {
            line: 0,
            message: "oracle log has neither footer nor summary".into(),
        }
    })?;
    Ok(recall_curve(&log.replay(), &s_full, oh.k))
}

/// One strategy's row in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub runs: usize,
    /// Mean time to reach the threshold; `None` if some run never reached it.
    pub time_to_threshold: BTreeMap<ScoreKey, Option<f64>>,
    pub first_result: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub threshold: f64,
    /// Unit of the reported times.
    pub unit: String,
    pub s_full: BTreeMap<ScoreKey, f64>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fixed-width table, one row per strategy.
    pub fn table(&self) -> String {
        let keys: Vec<ScoreKey> = self.s_full.keys().copied().collect();
        let mut out = format!("{:<14}", "strategy");
        for k in &keys {
            out.push_str(&format!("{:>10}", k.name()));
        }
        out.push_str(&format!("{:>10}\n", "first"));
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.1}"));
        for row in &self.rows {
            out.push_str(&format!("{:<14}", row.strategy));
            for k in &keys {
                out.push_str(&format!("{:>10}", cell(row.time_to_threshold.get(k).copied().flatten())));
            }
            out.push_str(&format!("{:>10}\n", cell(row.first_result)));
        }
        out
    }
}

fn mean_if_all(values: &[Option<f64>]) -> Option<f64> {
    let all: Option<Vec<f64>> = values.iter().copied().collect();
    all.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs each strategy to completion on the combination clock (one
/// millisecond per searched combination), averaging seeded strategies over
/// `seeds`.
pub fn compare_strategies(ctx: &PlanContext, strategies: &[Strategy], seeds: &[u64], threshold: f64) -> Result<Report, EvalError> {
    let oracle = exhaustive(ctx)?;
    let mut task = ctx.task.clone();
    task.config.deadline_ms = None;
    let ctx = PlanContext { task: &task, ..*ctx };
    let mut rows = Vec::new();
    for strategy in strategies {
        let run_seeds: Vec<u64> = if strategy.is_seeded() {
            seeds.to_vec()
        } else {
            vec![seeds.first().copied().unwrap_or(0)]
        };
        let mut times: BTreeMap<ScoreKey, Vec<Option<f64>>> = BTreeMap::new();
        let mut firsts = Vec::new();
        for &seed in &run_seeds {
            let mut order = build_order(strategy, &ctx, seed)?;
            let engine = Engine::new(
                ctx.dataset,
                &task,
                ctx.cache,
                ctx.embeddings,
                EngineOptions {
                    seed,
                    ..EngineOptions::default()
                },
            );
            let mut sink = CollectSink::default();
            engine
                .run(order.as_mut(), &mut sink, &ComboClock::millis())
                .map_err(Box::new)?;
            let curve = recall_of_events(&sink.events, &oracle.s_full, task.config.k);
            for (key, t) in curve.time_to_threshold(threshold) {
                times.entry(key).or_default().push(t);
            }
            firsts.push(sink.events.first().map(|e| e.elapsed.as_secs_f64() * 1000.0));
        }
        rows.push(ReportRow {
            strategy: strategy.name(),
            runs: run_seeds.len(),
            time_to_threshold: times.iter().map(|(&k, v)| (k, mean_if_all(v))).collect(),
            first_result: mean_if_all(&firsts),
        });
    }
    Ok(Report {
        threshold,
        unit: "combinations".into(),
        s_full: oracle.s_full,
        rows,
    })
}
