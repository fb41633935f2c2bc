//! Attribute-level dependence between a combination and the aggregate
//! attribute: mutual information and the one-way ANOVA F statistic.

use std::collections::HashMap;

use crate::aggregate::stats;
use crate::dataset::{AttrId, Code, Dataset};

/// Mutual information (natural log) between the combination's value tuple
/// and the binned aggregate attribute, over all rows.
pub fn mi_raw(dataset: &Dataset, attrs: &[AttrId]) -> f64 {
    let n = dataset.row_count();
    if n == 0 {
        return 0.0;
    }
    let grouping = dataset.group_rows(attrs, None);
    let target = dataset.column(dataset.agg_attr());
    let mut joint: HashMap<(u32, Code), usize> = HashMap::new();
    let mut target_counts: HashMap<Code, usize> = HashMap::new();
    for (row, &g) in grouping.row_groups.iter().enumerate() {
        *joint.entry((g, target[row])).or_default() += 1;
        *target_counts.entry(target[row]).or_default() += 1;
    }
    let group_counts = grouping.sizes();
    let n = n as f64;
    // Sorted so the floating-point sum does not depend on hash order.
    let mut cells: Vec<_> = joint.into_iter().collect();
    cells.sort_unstable_by_key(|&(k, _)| k);
    let terms: Vec<f64> = cells
        .into_iter()
        .map(|((g, t), c)| {
            let c = c as f64;
            let expected = group_counts[g as usize] as f64 * target_counts[&t] as f64;
            c / n * (c * n / expected).ln()
        })
        .collect();
    stats::pairwise_sum(&terms).max(0.0)
}

/// One-way ANOVA F statistic of the aggregate values partitioned by the
/// combination. Rows with a null aggregate value are ignored.
///
/// Returns 0 with fewer than two groups or no within-group degrees of
/// freedom, and `+∞` when groups differ but have no internal spread.
pub fn anova_raw(dataset: &Dataset, attrs: &[AttrId]) -> f64 {
    let values = dataset.agg_values();
    let rows: Vec<u32> = (0..dataset.row_count() as u32)
        .filter(|&r| !values[r as usize].is_nan())
        .collect();
    let grouping = dataset.group_rows(attrs, Some(&rows));
    let theta = grouping.group_count();
    let n = rows.len();
    if theta < 2 || n <= theta {
        return 0.0;
    }
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); theta];
    for (i, &g) in grouping.row_groups.iter().enumerate() {
        members[g as usize].push(values[rows[i] as usize]);
    }
    let all: Vec<f64> = rows.iter().map(|&r| values[r as usize]).collect();
    let mu = stats::mean(&all);
    let mut between = Vec::with_capacity(theta);
    let mut within = Vec::with_capacity(n);
    for group in &members {
        let mu_j = stats::mean(group);
        between.push(group.len() as f64 * (mu_j - mu) * (mu_j - mu));
        within.extend(group.iter().map(|x| (x - mu_j) * (x - mu_j)));
    }
    let between = stats::pairwise_sum(&between) / (theta - 1) as f64;
    let within = stats::pairwise_sum(&within) / (n - theta) as f64;
    if within == 0.0 {
        return if between > 0.0 { f64::INFINITY } else { 0.0 };
    }
    between / within
}

/// Divides by the maximum so the largest value becomes exactly 1. An
/// infinite maximum maps infinite entries to 1 and finite ones to 0.
pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(0.0f64, f64::max);
    raw.iter()
        .map(|&x| {
            if max == 0.0 {
                0.0
            } else if max.is_infinite() {
                if x.is_infinite() {
                    1.0
                } else {
                    0.0
                }
            } else {
                (x / max).clamp(0.0, 1.0)
            }
        })
        .collect()
}
