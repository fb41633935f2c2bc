use std::collections::HashSet;

use crate::claim::{Predicate, Refinement};

/// Keeps the items whose predicate is not a strict superset of another
/// item's predicate, preserving order.
pub fn retain_most_general<T>(items: Vec<T>, predicate: impl Fn(&T) -> &Predicate) -> Vec<T> {
    let present: HashSet<&Predicate> = items.iter().map(&predicate).collect();
    let keep: Vec<bool> = items
        .iter()
        .map(|item| !has_present_proper_subset(predicate(item), &present))
        .collect();
    items
        .into_iter()
        .zip(keep)
        .filter_map(|(item, k)| k.then_some(item))
        .collect()
}

fn has_present_proper_subset(p: &Predicate, present: &HashSet<&Predicate>) -> bool {
    let atoms = p.atoms();
    let n = atoms.len();
    if !(2..64).contains(&n) {
        // Arity 1 has no non-empty proper subset; very long predicates fall
        // back to pairwise checks.
        return n >= 64 && present.iter().any(|q| q.arity() < n && q.is_subset_of(p));
    }
    (1u64..(1 << n) - 1).any(|mask| {
        let sub: Vec<_> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| atoms[i]).collect();
        Predicate::new(sub).is_some_and(|q| present.contains(&q))
    })
}

pub fn generality_filter(refinements: Vec<Refinement>) -> Vec<Refinement> {
    retain_most_general(refinements, Refinement::predicate)
}
