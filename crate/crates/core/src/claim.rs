//! Queries, claims, predicates, refinements and task validation.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::stats;
use crate::dataset::{AttrId, Code, Dataset};
use crate::error::{FieldError, TaskError};
use crate::measures::Measure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFn {
    Count,
    Sum,
    #[serde(alias = "avg", alias = "mean")]
    Average,
    Median,
    Min,
    Max,
}

impl AggFn {
    pub const ALL: [AggFn; 6] = [
        AggFn::Count,
        AggFn::Sum,
        AggFn::Average,
        AggFn::Median,
        AggFn::Min,
        AggFn::Max,
    ];

    /// Whether the function reads aggregate values (everything but `Count`).
    pub fn needs_values(self) -> bool {
        self != AggFn::Count
    }
}

/// One equality condition `A = v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub attr: AttrId,
    pub code: Code,
}

impl Atom {
    pub fn new(attr: AttrId, code: Code) -> Self {
        Self { attr, code }
    }
}

/// Conjunction of equality atoms over distinct attributes, kept sorted by
/// attribute id so equal atom sets compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Predicate {
    atoms: Vec<Atom>,
}

impl Predicate {
    /// Canonicalizes the atoms. Returns `None` if an attribute repeats.
    pub fn new(mut atoms: Vec<Atom>) -> Option<Self> {
        atoms.sort();
        if atoms.windows(2).any(|w| w[0].attr == w[1].attr) {
            return None;
        }
        Some(Self { atoms })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (AttrId, Code)>) -> Option<Self> {
        Self::new(pairs.into_iter().map(|(a, c)| Atom::new(a, c)).collect())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn arity(&self) -> usize {
        self.atoms.len()
    }

    pub fn attrs(&self) -> Vec<AttrId> {
        self.atoms.iter().map(|a| a.attr).collect()
    }

    pub fn matches(&self, dataset: &Dataset, row: usize) -> bool {
        self.atoms
            .iter()
            .all(|a| dataset.column(a.attr)[row] == a.code)
    }

    /// `true` if every atom of `self` also appears in `other`.
    pub fn is_subset_of(&self, other: &Predicate) -> bool {
        self.atoms.iter().all(|a| other.atoms.binary_search(a).is_ok())
    }

    /// `[[attribute name, value text], ...]` with nulls shown by their label.
    pub fn named_pairs(&self, dataset: &Dataset) -> Vec<(String, String)> {
        self.atoms
            .iter()
            .map(|a| {
                let attr = dataset.attribute(a.attr);
                let value = attr
                    .decode(a.code)
                    .map_or_else(|| attr.value_label(a.code).to_owned(), str::to_owned);
                (attr.name.clone(), value)
            })
            .collect()
    }

    pub fn describe(&self, dataset: &Dataset) -> String {
        if self.atoms.is_empty() {
            return "TRUE".to_owned();
        }
        self.named_pairs(dataset)
            .into_iter()
            .map(|(a, v)| format!("{a}={v}"))
            .collect::<Vec<_>>()
            .join(" AND ")
    }
}

/// The query `SELECT gb, agg_fn(agg) FROM D WHERE filter GROUP BY gb`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub group_by: AttrId,
    pub agg_attr: AttrId,
    pub agg_fn: AggFn,
    pub base_filter: Predicate,
}

/// The assertion that group `g1` aggregates strictly higher than `g2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Claim {
    pub g1: Code,
    pub g2: Code,
}

/// Which median splits the rows of the median test into above / not-above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MedianReference {
    /// Median of the union of both groups (Mood's median test).
    #[default]
    Pooled,
    /// Each group split at its own median.
    PerGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub k: usize,
    pub m: usize,
    /// Minimum size M of both groups in a refinement.
    pub min_group: usize,
    pub measures: Vec<Measure>,
    pub deadline_ms: Option<u64>,
    pub seed: u64,
    pub median_reference: MedianReference,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            k: 100,
            m: 2,
            min_group: 30,
            measures: Measure::ALL.to_vec(),
            deadline_ms: None,
            seed: 0,
            median_reference: MedianReference::Pooled,
        }
    }
}

impl TaskConfig {
    pub fn deadline(&self) -> Option<Duration> {
        self.deadline_ms.map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryDoc {
    /// Defaults to the dataset's group-by attribute.
    #[serde(default)]
    pub group_by: Option<String>,
    /// Defaults to the dataset's aggregate attribute.
    #[serde(default)]
    pub aggregate: Option<String>,
    pub function: AggFn,
    /// Base filter as `[attribute, value]` pairs.
    #[serde(default)]
    pub filter: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimDoc {
    pub g1: String,
    pub g2: String,
}

/// A task as written by the user: names instead of codes.
///
/// ```json
/// {"query": {"function": "average"},
///  "claim": {"g1": "Master's degree", "g2": "Bachelor's degree"},
///  "config": {"k": 100, "m": 2, "min_group": 30}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub query: QueryDoc,
    pub claim: ClaimDoc,
    #[serde(default)]
    pub config: TaskConfig,
}

impl TaskSpec {
    pub fn new(function: AggFn, g1: impl Into<String>, g2: impl Into<String>) -> Self {
        Self {
            query: QueryDoc {
                group_by: None,
                aggregate: None,
                function,
                filter: Vec::new(),
            },
            claim: ClaimDoc {
                g1: g1.into(),
                g2: g2.into(),
            },
            config: TaskConfig::default(),
        }
    }

    pub fn average(g1: impl Into<String>, g2: impl Into<String>) -> Self {
        Self::new(AggFn::Average, g1, g2)
    }

    pub fn with_config(mut self, config: TaskConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_filter(mut self, attr: impl Into<String>, value: impl Into<String>) -> Self {
        self.query.filter.push((attr.into(), value.into()));
        self
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        serde_json::from_str(text).map_err(|e| TaskError::Parse(e.to_string()))
    }

    /// Resolves names against the dataset and checks every invariant,
    /// collecting all problems rather than stopping at the first.
    pub fn validate(&self, dataset: &Dataset) -> Result<Task, TaskError> {
        let mut errors = Vec::new();

        let resolve_attr = |field: &str, name: &Option<String>, default: AttrId, errors: &mut Vec<FieldError>| {
            match name {
                None => Some(default),
                Some(n) => match dataset.attribute_by_name(n) {
                    Some(a) if a.id == default => Some(a.id),
                    Some(_) => {
                        errors.push(FieldError::new(
                            field,
                            format!("`{n}` is not the dataset's configured attribute for this role"),
                        ));
                        None
                    }
                    None => {
                        errors.push(FieldError::new(field, format!("unknown attribute `{n}`")));
                        None
                    }
                },
            }
        };
        let group_by = resolve_attr("query.group_by", &self.query.group_by, dataset.group_by(), &mut errors);
        let agg_attr = resolve_attr("query.aggregate", &self.query.aggregate, dataset.agg_attr(), &mut errors);

        if let Some(agg) = agg_attr {
            let attr = dataset.attribute(agg);
            if self.query.function.needs_values() && !attr.kind.is_numeric() {
                errors.push(FieldError::new(
                    "query.function",
                    format!(
                        "{:?} requires a numeric aggregate attribute, `{}` is categorical",
                        self.query.function, attr.name
                    ),
                ));
            }
        }

        let mut filter_atoms = Vec::new();
        for (i, (name, value)) in self.query.filter.iter().enumerate() {
            let field = format!("query.filter[{i}]");
            match dataset.attribute_by_name(name) {
                None => errors.push(FieldError::new(field, format!("unknown attribute `{name}`"))),
                Some(attr) => match attr.code_of(value) {
                    None => errors.push(FieldError::new(
                        field,
                        format!("value `{value}` does not occur in `{name}`"),
                    )),
                    Some(code) => filter_atoms.push(Atom::new(attr.id, code)),
                },
            }
        }
        let base_filter = Predicate::new(filter_atoms).unwrap_or_else(|| {
            errors.push(FieldError::new("query.filter", "attribute repeated in filter"));
            Predicate::default()
        });

        let group_code = |field: &str, text: &str, errors: &mut Vec<FieldError>| {
            let gb = group_by?;
            let code = dataset.attribute(gb).code_of(text);
            if code.is_none() {
                errors.push(FieldError::new(
                    field,
                    format!("unknown group `{text}` in `{}`", dataset.attribute(gb).name),
                ));
            }
            code
        };
        let g1 = group_code("claim.g1", &self.claim.g1, &mut errors);
        let g2 = group_code("claim.g2", &self.claim.g2, &mut errors);
        if g1.is_some() && g1 == g2 {
            errors.push(FieldError::new("claim", "identical groups"));
        }

        let c = &self.config;
        for (field, value) in [("config.k", c.k), ("config.m", c.m), ("config.min_group", c.min_group)] {
            if value < 1 {
                errors.push(FieldError::new(field, "must be at least 1"));
            }
        }
        if c.measures.is_empty() {
            errors.push(FieldError::new("config.measures", "no measure selected"));
        }

        if !errors.is_empty() {
            return Err(TaskError::Invalid(errors));
        }
        let (group_by, agg_attr, g1, g2) = (
            group_by.expect("checked"),
            agg_attr.expect("checked"),
            g1.expect("checked"),
            g2.expect("checked"),
        );
        let mut config = c.clone();
        config.measures.sort();
        config.measures.dedup();
        let query = QuerySpec {
            group_by,
            agg_attr,
            agg_fn: self.query.function,
            base_filter,
        };
        let claim = Claim { g1, g2 };
        let fingerprint = task_fingerprint(dataset, &query, &claim, &config);
        Ok(Task {
            query,
            claim,
            config,
            fingerprint,
        })
    }
}

/// A task validated against one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub query: QuerySpec,
    pub claim: Claim,
    pub config: TaskConfig,
    fingerprint: String,
}

/// Unrefined aggregates of both groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Baseline {
    pub v1: f64,
    pub v2: f64,
    pub already_holds: bool,
}

impl Task {
    /// Identifies the dataset together with everything that determines the
    /// refinement set and its scores.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Measures that can be computed for this task: statistical significance
    /// needs Average or Median, embedding similarity needs a table.
    pub fn active_measures(&self, has_embeddings: bool) -> Vec<Measure> {
        self.config
            .measures
            .iter()
            .copied()
            .filter(|m| match m {
                Measure::StatSig => matches!(self.query.agg_fn, AggFn::Average | AggFn::Median),
                Measure::EmbSim => has_embeddings,
                _ => true,
            })
            .collect()
    }

    /// Evaluates the unrefined query for both groups.
    pub fn baseline(&self, dataset: &Dataset) -> Result<Baseline, TaskError> {
        let gb = dataset.column(self.query.group_by);
        let agg = dataset.agg_values();
        let mut sides: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut counts = [0usize; 2];
        for row in 0..dataset.row_count() {
            if !self.query.base_filter.matches(dataset, row) {
                continue;
            }
            let side = if gb[row] == self.claim.g1 {
                0
            } else if gb[row] == self.claim.g2 {
                1
            } else {
                continue;
            };
            counts[side] += 1;
            if !agg[row].is_nan() {
                sides[side].push(agg[row]);
            }
        }
        let attr = dataset.attribute(self.query.group_by);
        let mut values = [0.0; 2];
        for (side, code) in [self.claim.g1, self.claim.g2].into_iter().enumerate() {
            let n = if self.query.agg_fn.needs_values() {
                sides[side].len()
            } else {
                counts[side]
            };
            if n == 0 {
                return Err(TaskError::EmptyGroup(attr.value_label(code).to_owned()));
            }
            values[side] = stats::aggregate(self.query.agg_fn, &sides[side], counts[side]);
        }
        Ok(Baseline {
            v1: values[0],
            v2: values[1],
            already_holds: values[0] > values[1],
        })
    }
}

fn task_fingerprint(dataset: &Dataset, query: &QuerySpec, claim: &Claim, config: &TaskConfig) -> String {
    let mut h = Sha256::new();
    h.update(dataset.fingerprint().as_bytes());
    h.update(format!(
        "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|k={}|m={}|M={}|{:?}|{:?}",
        query.group_by,
        query.agg_attr,
        query.agg_fn,
        query.base_filter,
        claim.g1,
        claim.g2,
        config.k,
        config.m,
        config.min_group,
        config.measures,
        config.median_reference,
    ));
    hex::encode(h.finalize())
}

/// Auxiliary per-group statistics captured with a refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AuxStats {
    None,
    /// Sample standard deviations (n − 1 denominator); absent below two values.
    StdDev { s1: Option<f64>, s2: Option<f64> },
    /// Rows strictly above / at-or-below the reference median in each group.
    MedianSplit {
        above1: usize,
        below1: usize,
        above2: usize,
        below2: usize,
    },
}

/// A predicate under which the claim holds, with the statistics observed
/// when it was found.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Refinement {
    predicate: Predicate,
    n1: usize,
    n2: usize,
    agg1: f64,
    agg2: f64,
    /// Rows of the whole relation satisfying the base filter and the predicate.
    covered: usize,
    stats: AuxStats,
    discovered_at: Duration,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefinementError {
    #[error("claim does not hold: {agg1} <= {agg2}")]
    NotEndorsing { agg1: f64, agg2: f64 },
    #[error("group sizes {n1}/{n2} below minimum {min}")]
    TooSmall { n1: usize, n2: usize, min: usize },
}

impl Refinement {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        predicate: Predicate,
        n1: usize,
        n2: usize,
        agg1: f64,
        agg2: f64,
        covered: usize,
        stats: AuxStats,
        min_group: usize,
    ) -> Result<Self, RefinementError> {
        // NaN aggregates are unordered and rejected as well.
        if agg1.partial_cmp(&agg2) != Some(std::cmp::Ordering::Greater) {
            return Err(RefinementError::NotEndorsing { agg1, agg2 });
        }
        if n1 < min_group || n2 < min_group {
            return Err(RefinementError::TooSmall {
                n1,
                n2,
                min: min_group,
            });
        }
        Ok(Self {
            predicate,
            n1,
            n2,
            agg1,
            agg2,
            covered,
            stats,
            discovered_at: Duration::ZERO,
        })
    }

    pub fn predicate(&self) -> &Predicate {
        &self.predicate
    }
    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn agg1(&self) -> f64 {
        self.agg1
    }
    pub fn agg2(&self) -> f64 {
        self.agg2
    }
    pub fn covered(&self) -> usize {
        self.covered
    }
    pub fn stats(&self) -> &AuxStats {
        &self.stats
    }
    pub fn discovered_at(&self) -> Duration {
        self.discovered_at
    }

    pub fn stamped(mut self, at: Duration) -> Self {
        self.discovered_at = at;
        self
    }

    /// Field-wise comparison with relative tolerance on the real-valued
    /// statistics; the discovery time is ignored.
    pub fn approx_eq(&self, other: &Refinement, rel: f64) -> bool {
        let close = |a: f64, b: f64| a == b || (a - b).abs() <= rel * a.abs().max(b.abs());
        let close_opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        let stats = match (&self.stats, &other.stats) {
            (AuxStats::StdDev { s1, s2 }, AuxStats::StdDev { s1: t1, s2: t2 }) => {
                close_opt(*s1, *t1) && close_opt(*s2, *t2)
            }
            (a, b) => a == b,
        };
        self.predicate == other.predicate
            && self.n1 == other.n1
            && self.n2 == other.n2
            && self.covered == other.covered
            && close(self.agg1, other.agg1)
            && close(self.agg2, other.agg2)
            && stats
    }
}

impl PartialEq for Refinement {
    fn eq(&self, other: &Self) -> bool {
        self.approx_eq(other, 0.0)
    }
}
