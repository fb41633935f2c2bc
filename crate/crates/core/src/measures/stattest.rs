//! Significance of the gap between the two refined groups.

use super::special;

/// Welch's t statistic and its Welch-Satterthwaite degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchT {
    pub t: f64,
    pub df: f64,
}

pub fn welch(mean1: f64, s1: f64, n1: usize, mean2: f64, s2: f64, n2: usize) -> Option<WelchT> {
    if n1 < 2 || n2 < 2 {
        return None;
    }
    let (n1, n2) = (n1 as f64, n2 as f64);
    let v1 = s1 * s1 / n1;
    let v2 = s2 * s2 / n2;
    let se2 = v1 + v2;
    if se2 == 0.0 {
        return None;
    }
    let df = se2 * se2 / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
    Some(WelchT {
        t: (mean1 - mean2) / se2.sqrt(),
        df,
    })
}

/// One minus the two-sided p-value of Welch's t-test. `None` when either
/// group has fewer than two values. With both variances zero the gap is
/// infinitely significant unless the means coincide.
pub fn statsig_avg(mean1: f64, s1: f64, n1: usize, mean2: f64, s2: f64, n2: usize) -> Option<f64> {
    if n1 < 2 || n2 < 2 {
        return None;
    }
    if s1 == 0.0 && s2 == 0.0 {
        return Some(if mean1 != mean2 { 1.0 } else { 0.0 });
    }
    let w = welch(mean1, s1, n1, mean2, s2, n2)?;
    Some(special::t_central_mass(w.t.abs(), w.df).clamp(0.0, 1.0))
}

/// Median-test statistic with Yates' continuity correction over the
/// 2×2 table of counts above / not above the reference median.
pub fn median_chi2(above1: usize, below1: usize, above2: usize, below2: usize) -> Option<f64> {
    let (a1, b1, a2, b2) = (above1 as f64, below1 as f64, above2 as f64, below2 as f64);
    let total = a1 + b1 + a2 + b2;
    if total == 0.0 {
        return None;
    }
    let ea = |ni: f64| (a1 + a2) * ni / total;
    let eb = |ni: f64| (b1 + b2) * ni / total;
    let cells = [
        (a1, ea(a1 + b1)),
        (b1, eb(a1 + b1)),
        (a2, ea(a2 + b2)),
        (b2, eb(a2 + b2)),
    ];
    if cells.iter().any(|&(_, e)| e == 0.0) {
        return None;
    }
    Some(
        cells
            .iter()
            .map(|&(o, e)| {
                let d = (o - e).abs() - 0.5;
                d * d / e
            })
            .sum(),
    )
}

/// One minus the chi-square(1) tail probability of the median-test
/// statistic; 0 for a degenerate table.
pub fn statsig_med(above1: usize, below1: usize, above2: usize, below2: usize) -> f64 {
    match median_chi2(above1, below1, above2, below2) {
        Some(x) => special::chi2_1_cdf(x).clamp(0.0, 1.0),
        None => 0.0,
    }
}
