//! The search kernel: all endorsing value assignments of one attribute
//! combination in a single grouped pass.
//!
//! For a combination `(A1, ..., Al)` the kernel evaluates the equivalent of
//!
//! ```sql
//! SELECT A1, ..., Al,
//!        agg(CASE WHEN gb = g1 THEN x END), agg(CASE WHEN gb = g2 THEN x END)
//! FROM D WHERE filter GROUP BY A1, ..., Al
//! HAVING agg1 > agg2 AND count1 >= M AND count2 >= M
//! ```
//!
//! Groups that fail the size condition are dropped after the counting pass,
//! before any value is gathered. [`Searcher::find_predicates_predicate_level`]
//! runs one filtered scan per value assignment instead and exists to check
//! the grouped path.

pub mod stats;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::claim::{AggFn, Atom, AuxStats, MedianReference, Predicate, Refinement, Task};
use crate::dataset::{AttrId, Code, Dataset};

/// A sorted set of split attributes searched together.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Combo(Vec<AttrId>);

impl Combo {
    pub fn new(mut attrs: Vec<AttrId>) -> Self {
        attrs.sort();
        attrs.dedup();
        Self(attrs)
    }

    pub fn attrs(&self) -> &[AttrId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn describe(&self, dataset: &Dataset) -> String {
        self.0
            .iter()
            .map(|&a| dataset.attribute(a).name.as_str())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl From<Vec<AttrId>> for Combo {
    fn from(attrs: Vec<AttrId>) -> Self {
        Self::new(attrs)
    }
}

impl std::fmt::Display for Combo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ids: Vec<String> = self.0.iter().map(|a| a.0.to_string()).collect();
        write!(f, "[{}]", ids.join(","))
    }
}

#[derive(Debug, Clone)]
pub struct ComboResult {
    pub combo: Combo,
    pub refinements: Vec<Refinement>,
    pub scan_time: Duration,
}

/// Every subset of size `1..=m` of the split attributes, minus attributes
/// with a single value and combinations whose largest group is below
/// `min_group`. Ordered by size, then lexicographically.
pub fn enumerate_combos(dataset: &Dataset, m: usize, min_group: usize) -> Vec<Combo> {
    let usable: Vec<AttrId> = dataset
        .split_attributes()
        .iter()
        .copied()
        .filter(|&a| dataset.attribute(a).cardinality() > 1)
        .collect();
    let mut combos = Vec::new();
    for size in 1..=m.min(usable.len()) {
        for_each_subset(&usable, size, &mut |attrs| combos.push(Combo(attrs.to_vec())));
    }
    if min_group > 1 {
        combos.retain(|c| max_group_size(dataset, c) >= min_group);
    }
    combos
}

pub fn max_group_size(dataset: &Dataset, combo: &Combo) -> usize {
    dataset
        .group_rows(combo.attrs(), None)
        .sizes()
        .into_iter()
        .max()
        .unwrap_or(0)
}

/// Calls `f` with every `size`-subset of `items`, in lexicographic order.
pub(crate) fn for_each_subset<T: Copy>(items: &[T], size: usize, f: &mut impl FnMut(&[T])) {
    fn go<T: Copy>(items: &[T], size: usize, start: usize, buf: &mut Vec<T>, f: &mut impl FnMut(&[T])) {
        if buf.len() == size {
            f(buf);
            return;
        }
        let needed = size - buf.len();
        for i in start..=items.len().saturating_sub(needed) {
            buf.push(items[i]);
            go(items, size, i + 1, buf, f);
            buf.pop();
        }
    }
    if size == 0 || size > items.len() {
        return;
    }
    go(items, size, 0, &mut Vec::with_capacity(size), f);
}

const G1: u8 = 0;
const G2: u8 = 1;
const OTHER: u8 = 2;

/// Rows of one task, prepared once and shared by every kernel call.
#[derive(Debug, Clone)]
pub struct Searcher<'a> {
    dataset: &'a Dataset,
    task: &'a Task,
    /// Rows satisfying the base filter.
    rows: Vec<u32>,
    /// Claim side of each entry of `rows`.
    sides: Vec<u8>,
}

impl<'a> Searcher<'a> {
    pub fn new(dataset: &'a Dataset, task: &'a Task) -> Self {
        let gb = dataset.column(task.query.group_by);
        let mut rows = Vec::new();
        let mut sides = Vec::new();
        for (row, &code) in gb.iter().enumerate() {
            if !task.query.base_filter.matches(dataset, row) {
                continue;
            }
            rows.push(row as u32);
            sides.push(if code == task.claim.g1 {
                G1
            } else if code == task.claim.g2 {
                G2
            } else {
                OTHER
            });
        }
        Self {
            dataset,
            task,
            rows,
            sides,
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn task(&self) -> &'a Task {
        self.task
    }

    /// Whether row `row` contributes to its side's count.
    fn counts(&self, row: usize) -> bool {
        !self.task.query.agg_fn.needs_values() || !self.dataset.agg_values()[row].is_nan()
    }

    /// Attribute-level search: one grouped pass over the filtered rows.
    pub fn find_predicates(&self, combo: &Combo) -> ComboResult {
        let started = Instant::now();
        let min_group = self.task.config.min_group;
        let grouping = self.dataset.group_rows(combo.attrs(), Some(&self.rows));
        let groups = grouping.group_count();

        let mut covered = vec![0usize; groups];
        let mut n = vec![[0usize; 2]; groups];
        for (i, &g) in grouping.row_groups.iter().enumerate() {
            let g = g as usize;
            covered[g] += 1;
            let side = self.sides[i];
            if side != OTHER && self.counts(self.rows[i] as usize) {
                n[g][side as usize] += 1;
            }
        }

        // Slot layout for the surviving groups: [g1 values | g2 values].
        let mut slot_of = vec![usize::MAX; groups];
        let mut offsets = Vec::new();
        let mut total = 0usize;
        for g in 0..groups {
            if n[g][0] >= min_group && n[g][1] >= min_group {
                slot_of[g] = offsets.len();
                offsets.push([total, total + n[g][0]]);
                total += n[g][0] + n[g][1];
            }
        }

        let mut refinements = Vec::new();
        if !offsets.is_empty() {
            let values = self.dataset.agg_values();
            let mut buffer = vec![0.0f64; total];
            let mut cursor = offsets.clone();
            if self.task.query.agg_fn.needs_values() {
                for (i, &g) in grouping.row_groups.iter().enumerate() {
                    let slot = slot_of[g as usize];
                    let side = self.sides[i];
                    if slot == usize::MAX || side == OTHER {
                        continue;
                    }
                    let v = values[self.rows[i] as usize];
                    if v.is_nan() {
                        continue;
                    }
                    let pos = &mut cursor[slot][side as usize];
                    buffer[*pos] = v;
                    *pos += 1;
                }
            }
            for g in 0..groups {
                let slot = slot_of[g];
                if slot == usize::MAX {
                    continue;
                }
                let [start1, start2] = offsets[slot];
                let (v1, v2) = if self.task.query.agg_fn.needs_values() {
                    (
                        &buffer[start1..start1 + n[g][0]],
                        &buffer[start2..start2 + n[g][1]],
                    )
                } else {
                    (&[][..], &[][..])
                };
                let atoms = combo
                    .attrs()
                    .iter()
                    .zip(&grouping.keys[g])
                    .map(|(&a, &c)| Atom::new(a, c))
                    .collect();
                if let Some(r) = self.summarize(atoms, v1, v2, n[g], covered[g]) {
                    refinements.push(r);
                }
            }
        }
        refinements.sort_by(|a, b| a.predicate().cmp(b.predicate()));
        ComboResult {
            combo: combo.clone(),
            refinements,
            scan_time: started.elapsed(),
        }
    }

    /// Predicate-level search: a full filtered scan for every assignment of
    /// values to the combination's attributes.
    pub fn find_predicates_predicate_level(&self, combo: &Combo) -> ComboResult {
        let started = Instant::now();
        let ds = self.dataset;
        let domains: Vec<Vec<Code>> = combo
            .attrs()
            .iter()
            .map(|&a| ds.attribute(a).present_codes(ds.column(a)))
            .collect();
        let gb = ds.column(self.task.query.group_by);
        let values = ds.agg_values();
        let mut refinements = Vec::new();
        let mut v1 = Vec::new();
        let mut v2 = Vec::new();
        for_each_assignment(&domains, &mut |codes| {
            let atoms: Vec<Atom> = combo
                .attrs()
                .iter()
                .zip(codes)
                .map(|(&a, &c)| Atom::new(a, c))
                .collect();
            v1.clear();
            v2.clear();
            let mut n = [0usize; 2];
            let mut covered = 0usize;
            for row in 0..ds.row_count() {
                if !atoms.iter().all(|a| ds.column(a.attr)[row] == a.code)
                    || !self.task.query.base_filter.matches(ds, row)
                {
                    continue;
                }
                covered += 1;
                let side = if gb[row] == self.task.claim.g1 {
                    0
                } else if gb[row] == self.task.claim.g2 {
                    1
                } else {
                    continue;
                };
                if !self.counts(row) {
                    continue;
                }
                n[side] += 1;
                if self.task.query.agg_fn.needs_values() {
                    [&mut v1, &mut v2][side].push(values[row]);
                }
            }
            if n[0] >= self.task.config.min_group && n[1] >= self.task.config.min_group {
                if let Some(r) = self.summarize(atoms, &v1, &v2, n, covered) {
                    refinements.push(r);
                }
            }
        });
        refinements.sort_by(|a, b| a.predicate().cmp(b.predicate()));
        ComboResult {
            combo: combo.clone(),
            refinements,
            scan_time: started.elapsed(),
        }
    }

    /// Aggregates one candidate group; `None` unless it endorses the claim.
    fn summarize(&self, atoms: Vec<Atom>, v1: &[f64], v2: &[f64], n: [usize; 2], covered: usize) -> Option<Refinement> {
        let f = self.task.query.agg_fn;
        let agg1 = stats::aggregate(f, v1, n[0]);
        let agg2 = stats::aggregate(f, v2, n[1]);
        if agg1.partial_cmp(&agg2) != Some(std::cmp::Ordering::Greater) {
            return None;
        }
        let aux = match f {
            AggFn::Average => AuxStats::StdDev {
                s1: stats::sample_stddev(v1),
                s2: stats::sample_stddev(v2),
            },
            AggFn::Median => {
                let (r1, r2) = match self.task.config.median_reference {
                    MedianReference::Pooled => {
                        let pooled: Vec<f64> = v1.iter().chain(v2).copied().collect();
                        let m = stats::median(&pooled);
                        (m, m)
                    }
                    MedianReference::PerGroup => (agg1, agg2),
                };
                let above1 = stats::count_above(v1, r1);
                let above2 = stats::count_above(v2, r2);
                AuxStats::MedianSplit {
                    above1,
                    below1: v1.len() - above1,
                    above2,
                    below2: v2.len() - above2,
                }
            }
            _ => AuxStats::None,
        };
        let predicate = Predicate::new(atoms).expect("combo attributes are distinct");
        Refinement::new(predicate, n[0], n[1], agg1, agg2, covered, aux, self.task.config.min_group).ok()
    }
}

/// Convenience wrapper building a one-off [`Searcher`].
pub fn find_predicates(dataset: &Dataset, task: &Task, combo: &Combo) -> ComboResult {
    Searcher::new(dataset, task).find_predicates(combo)
}

pub fn find_predicates_predicate_level(dataset: &Dataset, task: &Task, combo: &Combo) -> ComboResult {
    Searcher::new(dataset, task).find_predicates_predicate_level(combo)
}

fn for_each_assignment(domains: &[Vec<Code>], f: &mut impl FnMut(&[Code])) {
    fn go(domains: &[Vec<Code>], buf: &mut Vec<Code>, f: &mut impl FnMut(&[Code])) {
        if buf.len() == domains.len() {
            f(buf);
            return;
        }
        for &c in &domains[buf.len()] {
            buf.push(c);
            go(domains, buf, f);
            buf.pop();
        }
    }
    go(domains, &mut Vec::with_capacity(domains.len()), f);
}
