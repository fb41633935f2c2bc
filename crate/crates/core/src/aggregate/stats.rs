//! Numeric helpers shared by every aggregation path.

use crate::claim::AggFn;

const PAIRWISE_BLOCK: usize = 16;

/// Pairwise (cascade) summation; error grows with log n instead of n.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Sample standard deviation with the n − 1 denominator; `None` below two values.
pub fn sample_stddev(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mu = mean(values);
    let squares: Vec<f64> = values.iter().map(|v| (v - mu) * (v - mu)).collect();
    Some((pairwise_sum(&squares) / (values.len() - 1) as f64).sqrt())
}

/// Median; the mean of the two middle order statistics for even sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (lower, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower_max + upper) / 2.0
    }
}

/// Count of values strictly above `reference`.
pub fn count_above(values: &[f64], reference: f64) -> usize {
    values.iter().filter(|&&v| v > reference).count()
}

/// Evaluates `f` over one group. `values` holds the non-null aggregate
/// values; `rows` is the row count used by `Count`.
pub fn aggregate(f: AggFn, values: &[f64], rows: usize) -> f64 {
    match f {
        AggFn::Count => rows as f64,
        AggFn::Sum => pairwise_sum(values),
        AggFn::Average => mean(values),
        AggFn::Median => median(values),
        AggFn::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        AggFn::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
