//! Orders attribute combinations so that natural refinements surface early.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{Combo, Searcher};
use crate::claim::{AggFn, Task};
use crate::dataset::Dataset;
use crate::error::PlanError;
use crate::measures::{embedding, EmbeddingTable, Measure, Scorer};
use crate::precompute::{regscore, PrecomputeCache};

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.01;

/// How combinations are ordered for a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Descending by one measure's heuristic.
    Single(Measure),
    /// Each measure's ranking in turn until it has yielded `k` refinements.
    Serial,
    /// Round-robin interleaving of the per-measure rankings.
    Merged,
    /// Descending by the best average naturalness found on a row sample.
    Sample(f64),
    Random,
    /// Enumeration order.
    Exhaustive,
    /// A caller-supplied order; unlisted combinations follow in enumeration
    /// order.
    Custom(Vec<Combo>),
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Single(m) => m.name().to_owned(),
            Strategy::Serial => "serial".into(),
            Strategy::Merged => "merged".into(),
            Strategy::Sample(f) => format!("sample:{f}"),
            Strategy::Random => "random".into(),
            Strategy::Exhaustive => "exhaustive".into(),
            Strategy::Custom(_) => "custom".into(),
        }
    }

    /// Whether the order depends on the seed.
    pub fn is_seeded(&self) -> bool {
        matches!(self, Strategy::Sample(_) | Strategy::Random)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Strategy {
    type Err = PlanError;

    /// Parses `anova | mi | embsim | statsig | coverage | serial | merged |
    /// sample | sample:<fraction> | random | exhaustive`.
    fn from_str(s: &str) -> Result<Self, PlanError> {
        if let Some(m) = Measure::parse(s) {
            return Ok(Strategy::Single(m));
        }
        match s {
            "serial" => Ok(Strategy::Serial),
            "merged" => Ok(Strategy::Merged),
            "random" => Ok(Strategy::Random),
            "exhaustive" => Ok(Strategy::Exhaustive),
            "sample" => Ok(Strategy::Sample(DEFAULT_SAMPLE_FRACTION)),
            _ => {
                let fraction = s
                    .strip_prefix("sample:")
                    .ok_or_else(|| PlanError::UnknownStrategy(s.to_owned()))?
                    .parse::<f64>()
                    .map_err(|_| PlanError::UnknownStrategy(s.to_owned()))?;
                check_fraction(fraction)?;
                Ok(Strategy::Sample(fraction))
            }
        }
    }
}

fn check_fraction(f: f64) -> Result<(), PlanError> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(PlanError::SampleFraction(f))
    }
}

/// A total order over the task's combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityPlan {
    pub combos: Vec<Combo>,
    pub strategy: String,
    /// Rankings that fed this plan.
    pub provenance: Vec<String>,
}

impl PriorityPlan {
    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }
}

/// Refinement counts of one searched combination, per measure with a
/// defined score.
pub type FoundCounts = [usize; Measure::ALL.len()];

/// A source of combinations consumed by the engine.
pub trait CombOrder {
    fn next_combo(&mut self) -> Option<Combo>;

    /// Feedback after `combo` was searched.
    fn report(&mut self, _combo: &Combo, _found: &FoundCounts) {}

    /// Total number of combinations this order will yield.
    fn total(&self) -> usize;

    /// `true` if the order ignores feedback, so combinations can be searched
    /// ahead of time.
    fn is_static(&self) -> bool {
        false
    }

    fn strategy(&self) -> String;
}

/// Walks a fixed plan.
#[derive(Debug, Clone)]
pub struct PlanOrder {
    plan: PriorityPlan,
    pos: usize,
}

impl PlanOrder {
    pub fn new(plan: PriorityPlan) -> Self {
        Self { plan, pos: 0 }
    }
}

impl CombOrder for PlanOrder {
    fn next_combo(&mut self) -> Option<Combo> {
        let c = self.plan.combos.get(self.pos).cloned();
        self.pos += 1;
        c
    }

    fn total(&self) -> usize {
        self.plan.len()
    }

    fn is_static(&self) -> bool {
        true
    }

    fn strategy(&self) -> String {
        self.plan.strategy.clone()
    }
}

/// Consumes plan `i` until the combinations it has walked (including ones
/// searched earlier for another plan) hold `k` refinements scored by
/// measure `i`, then moves to plan `i + 1`. Afterwards the remaining
/// combinations follow in enumeration order.
#[derive(Debug, Clone)]
pub struct SerialOrder {
    plans: Vec<(Measure, Vec<Combo>)>,
    universe: Vec<Combo>,
    k: usize,
    plan: usize,
    pos: usize,
    quota: usize,
    searched: HashMap<Combo, FoundCounts>,
    emitted: HashSet<Combo>,
    tail: usize,
}

impl SerialOrder {
    pub fn new(plans: Vec<(Measure, PriorityPlan)>, universe: Vec<Combo>, k: usize) -> Self {
        Self {
            plans: plans.into_iter().map(|(m, p)| (m, p.combos)).collect(),
            universe,
            k,
            plan: 0,
            pos: 0,
            quota: 0,
            searched: HashMap::new(),
            emitted: HashSet::new(),
            tail: 0,
        }
    }
}

impl CombOrder for SerialOrder {
    fn next_combo(&mut self) -> Option<Combo> {
        while self.plan < self.plans.len() {
            let (measure, order) = &self.plans[self.plan];
            if self.quota >= self.k || self.pos >= order.len() {
                self.plan += 1;
                self.pos = 0;
                self.quota = 0;
                continue;
            }
            let combo = &order[self.pos];
            self.pos += 1;
            if self.emitted.insert(combo.clone()) {
                return Some(combo.clone());
            }
            if let Some(found) = self.searched.get(combo) {
                self.quota += found[measure.index()];
            }
        }
        while self.tail < self.universe.len() {
            let combo = &self.universe[self.tail];
            self.tail += 1;
            if self.emitted.insert(combo.clone()) {
                return Some(combo.clone());
            }
        }
        None
    }

    fn report(&mut self, combo: &Combo, found: &FoundCounts) {
        self.searched.insert(combo.clone(), *found);
        if let Some((measure, _)) = self.plans.get(self.plan) {
            self.quota += found[measure.index()];
        }
    }

    fn total(&self) -> usize {
        self.universe.len()
    }

    fn strategy(&self) -> String {
        "serial".into()
    }
}

/// Everything a plan may be derived from.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub dataset: &'a Dataset,
    pub task: &'a Task,
    pub cache: &'a PrecomputeCache,
    pub embeddings: Option<&'a EmbeddingTable>,
}

impl<'a> PlanContext<'a> {
    pub fn universe(&self) -> Result<Vec<Combo>, PlanError> {
        self.cache.check(self.dataset)?;
        Ok(self.cache.universe(self.task)?)
    }

    /// Measures that are active for the task and have a ranking heuristic.
    pub fn ranked_measures(&self) -> Vec<Measure> {
        self.task
            .active_measures(self.embeddings.is_some())
            .into_iter()
            .filter(|&m| self.heuristic(m).is_ok())
            .collect()
    }

    fn heuristic(&self, measure: Measure) -> Result<(), PlanError> {
        match measure {
            Measure::EmbSim if self.embeddings.is_none() && self.cache.combos.iter().any(|e| e.embsim_simple.is_none()) => {
                Err(PlanError::NoHeuristic("embsim".into()))
            }
            Measure::StatSig if !matches!(self.task.query.agg_fn, AggFn::Average | AggFn::Median) => {
                Err(PlanError::NoHeuristic("statsig".into()))
            }
            _ => Ok(()),
        }
    }
}

fn sorted_plan(universe: Vec<Combo>, scores: &HashMap<Combo, f64>, strategy: String, provenance: Vec<String>) -> PriorityPlan {
    let mut combos = universe;
    let key = |c: &Combo| {
        let s = scores[c];
        if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            s
        }
    };
    combos.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.cmp(b)));
    PriorityPlan {
        combos,
        strategy,
        provenance,
    }
}

/// Descending by one measure's heuristic, ties broken lexicographically.
pub fn rank_single(measure: Measure, ctx: &PlanContext) -> Result<PriorityPlan, PlanError> {
    ctx.heuristic(measure)?;
    let universe = ctx.universe()?;
    let reg = (measure == Measure::StatSig).then(|| regscore(ctx.dataset, ctx.task));
    let mut scores = HashMap::with_capacity(universe.len());
    for combo in &universe {
        let e = ctx.cache.entry(combo)?;
        let s = match measure {
            Measure::Anova => e.anova,
            Measure::Mi => e.mi,
            Measure::Coverage => e.large_groups as f64,
            Measure::EmbSim => e
                .embsim_simple
                .or_else(|| ctx.embeddings.and_then(|t| embedding::embsim_simple(ctx.dataset, t, combo.attrs())))
                .unwrap_or(f64::NEG_INFINITY),
            Measure::StatSig => {
                let reg = reg.as_ref().expect("computed for statsig");
                combo.attrs().iter().map(|a| reg[a]).sum()
            }
        };
        scores.insert(combo.clone(), s);
    }
    Ok(sorted_plan(universe, &scores, measure.name().into(), vec![measure.name().into()]))
}

/// Round-robin over the plans, skipping combinations already taken.
pub fn combine_merged(plans: &[PriorityPlan]) -> PriorityPlan {
    let mut seen = HashSet::new();
    let mut combos = Vec::new();
    let longest = plans.iter().map(PriorityPlan::len).max().unwrap_or(0);
    for i in 0..longest {
        for plan in plans {
            if let Some(c) = plan.combos.get(i) {
                if seen.insert(c.clone()) {
                    combos.push(c.clone());
                }
            }
        }
    }
    PriorityPlan {
        combos,
        strategy: "merged".into(),
        provenance: plans.iter().flat_map(|p| p.provenance.clone()).collect(),
    }
}

/// Seeded uniform shuffle of the universe.
pub fn rank_random(universe: Vec<Combo>, seed: u64) -> PriorityPlan {
    let mut combos = universe;
    combos.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    PriorityPlan {
        combos,
        strategy: "random".into(),
        provenance: vec![format!("seed={seed}")],
    }
}

/// Ranks combinations by the best average naturalness of their refinements
/// on a uniform row sample. Attribute-level scores come from the cache;
/// predicate-level scores from the sample. The minimum group size is scaled
/// by the fraction.
pub fn rank_by_sampling(ctx: &PlanContext, fraction: f64, seed: u64) -> Result<PriorityPlan, PlanError> {
    check_fraction(fraction)?;
    let universe = ctx.universe()?;
    let n = ctx.dataset.row_count();
    let size = ((n as f64 * fraction).ceil() as usize).clamp(1.min(n), n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = rand::seq::index::sample(&mut rng, n, size).into_vec();
    rows.sort_unstable();
    let sample = ctx.dataset.select_rows(&rows);
    let mut task = ctx.task.clone();
    task.config.min_group = ((task.config.min_group as f64 * fraction).ceil() as usize).max(1);
    let provenance = vec![format!("sample={fraction}"), format!("seed={seed}"), format!("rows={size}")];

    let gb = sample.column(task.query.group_by);
    let has = |code| gb.contains(&code);
    if !has(task.claim.g1) || !has(task.claim.g2) {
        log::warn!("row sample of {size} rows misses a claim group; falling back to enumeration order");
        return Ok(PriorityPlan {
            combos: universe,
            strategy: format!("sample:{fraction}"),
            provenance,
        });
    }

    let searcher = Searcher::new(&sample, &task);
    let scorer = Scorer::new(&sample, &task, ctx.embeddings);
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, combo) in universe.iter().enumerate() {
        let attr = ctx.cache.entry(combo)?.attr_scores();
        for r in searcher.find_predicates(combo).refinements {
            if let Some(avg) = scorer.score(&r, attr).average {
                let slot = best.entry(i).or_insert(f64::NEG_INFINITY);
                *slot = slot.max(avg);
            }
        }
    }
    let mut ranked: Vec<usize> = best.keys().copied().collect();
    ranked.sort_by(|&a, &b| best[&b].total_cmp(&best[&a]).then(a.cmp(&b)));
    let mut combos: Vec<Combo> = ranked.iter().map(|&i| universe[i].clone()).collect();
    combos.extend(
        universe
            .iter()
            .enumerate()
            .filter(|(i, _)| !best.contains_key(i))
            .map(|(_, c)| c.clone()),
    );
    Ok(PriorityPlan {
        combos,
        strategy: format!("sample:{fraction}"),
        provenance,
    })
}

/// A caller-supplied order. Unknown or repeated combinations are rejected;
/// unlisted ones follow in enumeration order.
pub fn custom_plan(universe: Vec<Combo>, order: &[Combo]) -> Result<PriorityPlan, PlanError> {
    let known: HashSet<&Combo> = universe.iter().collect();
    let mut seen = HashSet::new();
    for c in order {
        if !known.contains(c) {
            return Err(PlanError::Order(format!("combination {c} is not searched by this task")));
        }
        if !seen.insert(c) {
            return Err(PlanError::Order(format!("combination {c} listed twice")));
        }
    }
    let mut combos = order.to_vec();
    combos.extend(universe.iter().filter(|c| !seen.contains(c)).cloned());
    Ok(PriorityPlan {
        combos,
        strategy: "custom".into(),
        provenance: vec![format!("{} listed", order.len())],
    })
}

/// Builds the combination source for a strategy.
pub fn build_order(strategy: &Strategy, ctx: &PlanContext, seed: u64) -> Result<Box<dyn CombOrder>, PlanError> {
    let plan = |p: PriorityPlan| -> Box<dyn CombOrder> { Box::new(PlanOrder::new(p)) };
    Ok(match strategy {
        Strategy::Single(m) => plan(rank_single(*m, ctx)?),
        Strategy::Merged => {
            let plans = ctx
                .ranked_measures()
                .into_iter()
                .map(|m| rank_single(m, ctx))
                .collect::<Result<Vec<_>, _>>()?;
            if plans.is_empty() {
                return Err(PlanError::NoHeuristic("merged".into()));
            }
            plan(combine_merged(&plans))
        }
        Strategy::Serial => {
            let plans = ctx
                .ranked_measures()
                .into_iter()
                .map(|m| rank_single(m, ctx).map(|p| (m, p)))
                .collect::<Result<Vec<_>, _>>()?;
            Box::new(SerialOrder::new(plans, ctx.universe()?, ctx.task.config.k))
        }
        Strategy::Sample(f) => plan(rank_by_sampling(ctx, *f, seed)?),
        Strategy::Random => plan(rank_random(ctx.universe()?, seed)),
        Strategy::Exhaustive => plan(PriorityPlan {
            combos: ctx.universe()?,
            strategy: "exhaustive".into(),
            provenance: Vec::new(),
        }),
        Strategy::Custom(order) => plan(custom_plan(ctx.universe()?, order)?),
    })
}
