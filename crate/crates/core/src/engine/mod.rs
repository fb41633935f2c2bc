//! The anytime search loop.
//!
//! Combinations are taken from a [`CombOrder`] one at a time, searched with
//! the kernel, scored, and streamed to a [`Sink`]. Per-score top-k sets are
//! kept throughout, so their sums only grow. The loop ends when the order is
//! exhausted, the deadline passes, or the optional early-stop rule fires.

pub mod clock;
pub mod sink;
pub mod topk;

use std::collections::BTreeMap;

use thiserror::Error;

pub use clock::{Clock, ComboClock, WallClock};
pub use sink::{
    read_records, CollectSink, EventRecord, Footer, JsonlSink, Record, ResultEvent, RunHeader, RunSummary, Sink,
    StopReason, TopItem, TopKReport, RECORD_VERSION,
};
pub use topk::TopK;

use crate::aggregate::{Combo, ComboResult, Searcher};
use crate::claim::{Predicate, Task};
use crate::dataset::Dataset;
use crate::error::{CacheError, SinkError};
use crate::measures::{retain_most_general, AttrScores, EmbeddingTable, Measure, MeasureVector, ScoreKey, Scorer};
use crate::precompute::PrecomputeCache;
use crate::prioritize::{CombOrder, FoundCounts};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("sink failed after {} combinations: {source}", .summary.combos_searched)]
    Sink {
        #[source]
        source: SinkError,
        summary: Box<RunSummary>,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Stop once the last `window` combinations improved no top-k sum by more
/// than `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub window: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    /// Rank the final top-k over the most general refinements only.
    pub generality: bool,
    pub early_stop: Option<EarlyStop>,
    /// Kernel threads; above 1, static orders are searched in batches.
    pub workers: usize,
    /// Recorded in the header.
    pub seed: u64,
}

/// `history[j]` holds the top-k sums after `j` combinations (`history[0]` is
/// the empty state). True iff the last `c` combinations each improved every
/// sum by at most `epsilon`.
pub fn early_stop_rule(history: &[Vec<f64>], c: usize, epsilon: f64) -> bool {
    if c == 0 || history.len() < c + 1 {
        return false;
    }
    let tail = &history[history.len() - c - 1..];
    tail.windows(2)
        .all(|w| w[1].iter().zip(&w[0]).all(|(now, before)| now - before <= epsilon))
}

pub struct Engine<'a> {
    dataset: &'a Dataset,
    task: &'a Task,
    cache: &'a PrecomputeCache,
    scorer: Scorer<'a>,
    options: EngineOptions,
}

impl<'a> Engine<'a> {
    pub fn new(
        dataset: &'a Dataset,
        task: &'a Task,
        cache: &'a PrecomputeCache,
        embeddings: Option<&'a EmbeddingTable>,
        options: EngineOptions,
    ) -> Self {
        Self {
            dataset,
            task,
            cache,
            scorer: Scorer::new(dataset, task, embeddings),
            options,
        }
    }

    /// Score keys tracked for this task: active measures plus the average.
    pub fn keys(&self) -> Vec<ScoreKey> {
        let mut keys: Vec<ScoreKey> = self.scorer.active().iter().map(|&m| m.into()).collect();
        keys.push(ScoreKey::Average);
        keys
    }

    pub fn run(&self, order: &mut dyn CombOrder, sink: &mut dyn Sink, clock: &dyn Clock) -> Result<RunSummary, EngineError> {
        self.cache.check(self.dataset)?;
        let header = RunHeader {
            version: RECORD_VERSION,
            fingerprint: self.task.fingerprint().to_owned(),
            dataset_fingerprint: self.dataset.fingerprint().to_owned(),
            strategy: order.strategy(),
            seed: self.options.seed,
            k: self.task.config.k,
            m: self.task.config.m,
            min_group: self.task.config.min_group,
            measures: self.scorer.active().to_vec(),
            generality: self.options.generality,
            combos_total: order.total(),
        };
        let mut state = RunState {
            topk: TopK::new(self.task.config.k, self.keys()),
            found: Vec::new(),
            history: Vec::new(),
            searched: 0,
            total: order.total(),
        };
        state.history.push(state.topk.sums().into_values().collect());
        if let Err(e) = sink.header(&header) {
            return Err(self.abort(e, state, clock));
        }

        let searcher = Searcher::new(self.dataset, self.task);
        let deadline = self.task.config.deadline();
        let pool = if self.options.workers > 1 && order.is_static() {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.options.workers)
                .build()
                .ok()
        } else {
            None
        };
        let batch = pool.as_ref().map_or(1, |_| self.options.workers);

        let reason = 'search: loop {
            if deadline.is_some_and(|d| clock.now() >= d) {
                break StopReason::Deadline;
            }
            let combos: Vec<Combo> = std::iter::from_fn(|| order.next_combo()).take(batch).collect();
            if combos.is_empty() {
                break StopReason::Completed;
            }
            let results: Vec<ComboResult> = match &pool {
                Some(pool) => pool.install(|| {
                    use rayon::prelude::*;
                    combos.par_iter().map(|c| searcher.find_predicates(c)).collect()
                }),
                None => combos.iter().map(|c| searcher.find_predicates(c)).collect(),
            };
            for result in results {
                clock.combo_done();
                match self.absorb(result, &mut state, order, sink, clock) {
                    Ok(()) => {}
                    Err(Abort::Sink(e)) => return Err(self.abort(e, state, clock)),
                    Err(Abort::Cache(e)) => return Err(e.into()),
                }
                if let Some(rule) = self.options.early_stop {
                    if early_stop_rule(&state.history, rule.window, rule.epsilon) {
                        break 'search StopReason::EarlyStop;
                    }
                }
            }
        };

        let summary = self.summarize(&state, reason, clock);
        sink.summary(&summary).map_err(|e| EngineError::Sink {
            source: e,
            summary: Box::new(summary.clone()),
        })?;
        Ok(summary)
    }

    fn absorb(
        &self,
        result: ComboResult,
        state: &mut RunState,
        order: &mut dyn CombOrder,
        sink: &mut dyn Sink,
        clock: &dyn Clock,
    ) -> Result<(), Abort> {
        let attr: AttrScores = self.cache.entry(&result.combo).map_err(Abort::Cache)?.attr_scores();
        let elapsed = clock.now();
        let combo_index = state.searched;
        state.searched += 1;
        let mut counts: FoundCounts = [0; Measure::ALL.len()];
        for refinement in result.refinements {
            let scores = self.scorer.score(&refinement, attr);
            for m in Measure::ALL {
                if scores.measure(m).is_some() {
                    counts[m.index()] += 1;
                }
            }
            state.topk.offer(refinement.predicate(), &scores);
            let event = ResultEvent {
                refinement: refinement.stamped(elapsed),
                scores,
                elapsed,
                combo_index,
                combo: result.combo.clone(),
            };
            let record = EventRecord::new(&event, self.dataset);
            sink.event(&event, &record).map_err(Abort::Sink)?;
            state.found.push((event.refinement.predicate().clone(), scores));
        }
        order.report(&result.combo, &counts);
        state.history.push(state.topk.sums().into_values().collect());
        Ok(())
    }

    fn abort(&self, source: SinkError, state: RunState, clock: &dyn Clock) -> EngineError {
        EngineError::Sink {
            source,
            summary: Box::new(self.summarize(&state, StopReason::SinkError, clock)),
        }
    }

    fn summarize(&self, state: &RunState, reason: StopReason, clock: &dyn Clock) -> RunSummary {
        let filtered;
        let topk = if self.options.generality {
            filtered = apply_generality(&state.found, self.task.config.k, self.keys());
            &filtered
        } else {
            &state.topk
        };
        let topk = topk
            .keys()
            .map(|key| {
                let items = topk
                    .items(key)
                    .into_iter()
                    .map(|(p, score)| TopItem {
                        predicate: p.named_pairs(self.dataset),
                        score,
                    })
                    .collect();
                (key, TopKReport { sum: topk.sum(key), items })
            })
            .collect::<BTreeMap<_, _>>();
        RunSummary {
            combos_searched: state.searched,
            combos_total: state.total,
            refinements_found: state.found.len(),
            elapsed_ms: clock.now().as_secs_f64() * 1000.0,
            stop_reason: reason,
            generality: self.options.generality,
            topk,
        }
    }
}

/// Top-k over the most general of the found refinements.
pub fn apply_generality(found: &[(Predicate, MeasureVector)], k: usize, keys: Vec<ScoreKey>) -> TopK {
    let general = retain_most_general(found.iter().collect(), |(p, _)| p);
    let mut topk = TopK::new(k, keys);
    for (p, scores) in general {
        topk.offer(p, scores);
    }
    topk
}

struct RunState {
    topk: TopK,
    found: Vec<(Predicate, MeasureVector)>,
    history: Vec<Vec<f64>>,
    searched: usize,
    total: usize,
}

enum Abort {
    Sink(SinkError),
    Cache(CacheError),
}
