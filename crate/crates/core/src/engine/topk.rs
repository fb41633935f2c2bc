use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::claim::Predicate;
use crate::measures::{MeasureVector, ScoreKey};

#[derive(Debug, Clone)]
struct Entry {
    score: f64,
    predicate: Predicate,
}

impl Ord for Entry {
    /// Best first: higher score, then fewer atoms, then predicate order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.predicate.arity().cmp(&other.predicate.arity()))
            .then_with(|| self.predicate.cmp(&other.predicate))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

/// The `k` best refinements under each tracked score.
///
/// Sums add `max(score, 0)` in best-first order. Clamping keeps a sum from
/// dropping when a negative score (possible for embedding similarity) fills
/// an empty slot; the fixed order makes sums reproducible bit for bit.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    sets: BTreeMap<ScoreKey, BTreeSet<Entry>>,
}

impl TopK {
    pub fn new(k: usize, keys: impl IntoIterator<Item = ScoreKey>) -> Self {
        Self {
            k,
            sets: keys.into_iter().map(|key| (key, BTreeSet::new())).collect(),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = ScoreKey> + '_ {
        self.sets.keys().copied()
    }

    /// Offers a refinement under every tracked key; returns whether any set
    /// changed.
    pub fn offer(&mut self, predicate: &Predicate, scores: &MeasureVector) -> bool {
        let mut changed = false;
        for (&key, set) in &mut self.sets {
            let Some(score) = scores.get(key) else { continue };
            if self.k == 0 {
                continue;
            }
            let entry = Entry {
                score,
                predicate: predicate.clone(),
            };
            if set.len() < self.k {
                changed |= set.insert(entry);
            } else if set.last().is_some_and(|worst| entry < *worst) {
                set.pop_last();
                set.insert(entry);
                changed = true;
            }
        }
        changed
    }

    pub fn sum(&self, key: ScoreKey) -> f64 {
        self.sets
            .get(&key)
            .map_or(0.0, |set| set.iter().fold(0.0, |acc, e| acc + e.score.max(0.0)))
    }

    pub fn sums(&self) -> BTreeMap<ScoreKey, f64> {
        self.sets.keys().map(|&k| (k, self.sum(k))).collect()
    }

    pub fn len(&self, key: ScoreKey) -> usize {
        self.sets.get(&key).map_or(0, BTreeSet::len)
    }

    /// Best-first `(predicate, score)` pairs.
    pub fn items(&self, key: ScoreKey) -> Vec<(Predicate, f64)> {
        self.sets
            .get(&key)
            .map(|set| set.iter().map(|e| (e.predicate.clone(), e.score)).collect())
            .unwrap_or_default()
    }
}
