//! Equal-width binning with round edges for numeric attributes.
//!
//! The bin width is one order of magnitude below the range of the column:
//! a column spanning 0..47 gets width 1, one spanning 0..470 gets width 10.
//! Edges sit on multiples of the width so labels read like `"10-20"`.

use serde::{Deserialize, Serialize};

/// Tolerance used when snapping a value onto the edge grid; absorbs the
/// representation error of widths such as 0.1.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningRule {
    pub width: f64,
    pub anchor: f64,
    /// Decimal places used when printing edges.
    pub decimals: usize,
    /// Set when every non-null value is identical.
    pub degenerate: bool,
}

impl BinningRule {
    /// Derives the rule from a column; `NaN` entries are treated as nulls.
    /// Returns `None` when the column has no non-null value.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let (min, max) = values
            .iter()
            .filter(|v| !v.is_nan())
            .fold(None, |acc: Option<(f64, f64)>, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })?;

        if max <= min {
            return Some(Self {
                width: 1.0,
                anchor: min,
                decimals: decimals_for(min),
                degenerate: true,
            });
        }

        let exponent = (max - min).log10().floor() as i32 - 1;
        let width = 10f64.powi(exponent);
        let anchor = width * snap_floor(min / width);
        Some(Self {
            width,
            anchor,
            decimals: exponent.min(0).unsigned_abs() as usize,
            degenerate: false,
        })
    }

    pub fn bin_index(&self, value: f64) -> i64 {
        if self.degenerate {
            return 0;
        }
        snap_floor((value - self.anchor) / self.width) as i64
    }

    /// Lower and upper edge of bin `index`, rounded to the edge grid.
    pub fn edges(&self, index: i64) -> (f64, f64) {
        if self.degenerate {
            return (self.anchor, self.anchor);
        }
        let scale = 10f64.powi(self.decimals as i32);
        let lo = self.anchor + index as f64 * self.width;
        let hi = lo + self.width;
        ((lo * scale).round() / scale, (hi * scale).round() / scale)
    }

    pub fn label(&self, index: i64) -> String {
        if self.degenerate {
            return format!("{:.*}", self.decimals, self.anchor);
        }
        let (lo, hi) = self.edges(index);
        format!("{lo:.prec$}-{hi:.prec$}", prec = self.decimals)
    }

    /// Label of the bin holding `value`.
    pub fn label_of(&self, value: f64) -> String {
        self.label(self.bin_index(value))
    }
}

fn snap_floor(x: f64) -> f64 {
    (x + EDGE_EPS * x.abs().max(1.0)).floor()
}

fn decimals_for(value: f64) -> usize {
    // Enough places to print a constant value without losing its fraction.
    let text = format!("{value}");
    text.split_once('.').map_or(0, |(_, frac)| frac.len().min(6))
}
