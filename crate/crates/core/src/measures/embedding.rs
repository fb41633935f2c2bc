//! Text-embedding lookup tables and cosine similarity over them.
//!
//! The core never runs an embedding model. It reads a table mapping label
//! strings to vectors:
//!
//! ```json
//! {"dimension": 3, "entries": {"Income": [1.0, 0.0, 0.0]}}
//! ```
//!
//! Predicate texts are built from the dataset's labels: `"T(A1) T(v1) T(A2) T(v2)"`
//! for a predicate and `"T(A1) T(A2)"` for a bare attribute combination. When
//! such a concatenation is not a key, the mean of the per-part vectors is used.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::claim::Predicate;
use crate::dataset::{AttrId, Dataset};
use crate::error::EmbeddingError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingTable {
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, entries: BTreeMap<String, Vec<f64>>) -> Result<Self, EmbeddingError> {
        let table = Self { dimension, entries };
        table.check()?;
        Ok(table)
    }

    pub fn from_json(text: &str) -> Result<Self, EmbeddingError> {
        let table: Self = serde_json::from_str(text)?;
        table.check()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("embedding table serializes")
    }

    fn check(&self) -> Result<(), EmbeddingError> {
        if self.dimension == 0 {
            return Err(EmbeddingError::Dimension {
                key: String::new(),
                expected: 1,
                found: 0,
            });
        }
        for (key, v) in &self.entries {
            if v.len() != self.dimension {
                return Err(EmbeddingError::Dimension {
                    key: key.clone(),
                    expected: self.dimension,
                    found: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// The vector of `whole` if present, else the mean of the vectors of
    /// `parts` (all of which must be present).
    pub fn compose(&self, whole: &str, parts: &[String]) -> Option<Vec<f64>> {
        if let Some(v) = self.get(whole) {
            return Some(v.to_vec());
        }
        if parts.is_empty() {
            return None;
        }
        let mut sum = vec![0.0; self.dimension];
        for part in parts {
            let v = self.get(part)?;
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        }
        let n = parts.len() as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        Some(sum)
    }
}

/// Cosine similarity; `None` if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Text `"T(A) T(v)"` of one atom.
pub fn atom_text(dataset: &Dataset, attr: AttrId, code: crate::dataset::Code) -> String {
    let a = dataset.attribute(attr);
    format!("{} {}", a.label, a.value_label(code))
}

/// Whole-predicate text and its per-atom parts.
pub fn predicate_texts(dataset: &Dataset, predicate: &Predicate) -> (String, Vec<String>) {
    let parts: Vec<String> = predicate
        .atoms()
        .iter()
        .map(|a| atom_text(dataset, a.attr, a.code))
        .collect();
    (parts.join(" "), parts)
}

/// Concatenated attribute labels of a combination and the individual labels.
pub fn combo_texts(dataset: &Dataset, attrs: &[AttrId]) -> (String, Vec<String>) {
    let parts: Vec<String> = attrs
        .iter()
        .map(|&a| dataset.attribute(a).label.clone())
        .collect();
    (parts.join(" "), parts)
}

/// Cosine between the predicate text and the aggregate attribute's label.
pub fn embsim(dataset: &Dataset, table: &EmbeddingTable, predicate: &Predicate) -> Option<f64> {
    let (whole, parts) = predicate_texts(dataset, predicate);
    let v = table.compose(&whole, &parts)?;
    let target = table.get(&dataset.attribute(dataset.agg_attr()).label)?;
    cosine(&v, target)
}

/// Cosine between the combination's attribute labels and the aggregate
/// attribute's label; values are ignored.
pub fn embsim_simple(dataset: &Dataset, table: &EmbeddingTable, attrs: &[AttrId]) -> Option<f64> {
    let (whole, parts) = combo_texts(dataset, attrs);
    let v = table.compose(&whole, &parts)?;
    let target = table.get(&dataset.attribute(dataset.agg_attr()).label)?;
    cosine(&v, target)
}
