//! Offline, task-independent scores per attribute combination, persisted as
//! a versioned JSON cache, plus the task-dependent regression heuristic.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{enumerate_combos, Combo};
use crate::claim::Task;
use crate::dataset::{AttrId, AttrKind, Dataset, NULL_CODE};
use crate::error::CacheError;
use crate::measures::{anova_raw, embedding, mi_raw, normalize, AttrScores, EmbeddingTable};

pub const CACHE_VERSION: u32 = 1;
pub const DEFAULT_LARGE_GROUP: usize = 100;
const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheParams {
    pub m: usize,
    /// Occurrence threshold K for a value (tuple) to count as large.
    pub large_group: usize,
}

impl Default for CacheParams {
    fn default() -> Self {
        Self {
            m: 2,
            large_group: DEFAULT_LARGE_GROUP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub attr: AttrId,
    pub name: String,
    pub distinct_count: usize,
    /// Values occurring at least K times.
    pub large_values: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub combo: Combo,
    pub max_group: usize,
    pub distinct_groups: usize,
    /// Value tuples occurring at least K times.
    pub large_groups: usize,
    pub mi_raw: f64,
    pub mi: f64,
    #[serde(with = "extended_float")]
    pub anova_raw: f64,
    pub anova: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embsim_simple: Option<f64>,
}

impl CacheEntry {
    pub fn attr_scores(&self) -> AttrScores {
        AttrScores {
            mi: self.mi,
            anova: self.anova,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecomputeCache {
    pub version: u32,
    pub fingerprint: String,
    pub params: CacheParams,
    pub attributes: Vec<AttributeEntry>,
    /// Every combination from `enumerate_combos(dataset, m, 1)`, in that order.
    pub combos: Vec<CacheEntry>,
    #[serde(skip)]
    index: BTreeMap<Combo, usize>,
}

impl PrecomputeCache {
    /// Builds the cache. Combination scores are computed in parallel; the
    /// result does not depend on scheduling.
    pub fn build(dataset: &Dataset, params: CacheParams, embeddings: Option<&EmbeddingTable>) -> Self {
        let combos = enumerate_combos(dataset, params.m, 1);
        let raw: Vec<(usize, usize, usize, f64, f64, Option<f64>)> = combos
            .par_iter()
            .map(|c| {
                let sizes = dataset.group_rows(c.attrs(), None).sizes();
                (
                    sizes.iter().copied().max().unwrap_or(0),
                    sizes.len(),
                    sizes.iter().filter(|&&s| s >= params.large_group).count(),
                    mi_raw(dataset, c.attrs()),
                    anova_raw(dataset, c.attrs()),
                    embeddings.and_then(|t| embedding::embsim_simple(dataset, t, c.attrs())),
                )
            })
            .collect();
        let mi = normalize(&raw.iter().map(|r| r.3).collect::<Vec<_>>());
        let anova = normalize(&raw.iter().map(|r| r.4).collect::<Vec<_>>());
        let entries = combos
            .into_iter()
            .zip(raw)
            .enumerate()
            .map(|(i, (combo, r))| CacheEntry {
                combo,
                max_group: r.0,
                distinct_groups: r.1,
                large_groups: r.2,
                mi_raw: r.3,
                mi: mi[i],
                anova_raw: r.4,
                anova: anova[i],
                embsim_simple: r.5,
            })
            .collect();
        let attributes = dataset
            .split_attributes()
            .iter()
            .map(|&a| {
                let attr = dataset.attribute(a);
                let large = dataset
                    .group_rows(&[a], None)
                    .sizes()
                    .into_iter()
                    .filter(|&s| s >= params.large_group)
                    .count();
                AttributeEntry {
                    attr: a,
                    name: attr.name.clone(),
                    distinct_count: attr.distinct_count,
                    large_values: large,
                }
            })
            .collect();
        Self::assemble(dataset.fingerprint().to_owned(), params, attributes, entries)
    }

    fn assemble(fingerprint: String, params: CacheParams, attributes: Vec<AttributeEntry>, combos: Vec<CacheEntry>) -> Self {
        let mut cache = Self {
            version: CACHE_VERSION,
            fingerprint,
            params,
            attributes,
            combos,
            index: BTreeMap::new(),
        };
        cache.reindex();
        cache
    }

    fn reindex(&mut self) {
        self.index = self
            .combos
            .iter()
            .enumerate()
            .map(|(i, e)| (e.combo.clone(), i))
            .collect();
    }

    pub fn from_json(text: &str) -> Result<Self, CacheError> {
        let mut cache: Self = serde_json::from_str(text)?;
        if cache.version != CACHE_VERSION {
            return Err(CacheError::Version(cache.version));
        }
        cache.reindex();
        Ok(cache)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cache serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CacheError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Rejects a cache built from a different dataset.
    pub fn check(&self, dataset: &Dataset) -> Result<(), CacheError> {
        if self.fingerprint != dataset.fingerprint() {
            return Err(CacheError::FingerprintMismatch {
                expected: dataset.fingerprint().to_owned(),
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Rejects a cache that cannot serve combinations of arity `m`.
    pub fn check_arity(&self, m: usize) -> Result<(), CacheError> {
        if m > self.params.m {
            return Err(CacheError::ArityTooSmall {
                cached: self.params.m,
                requested: m,
            });
        }
        Ok(())
    }

    pub fn entry(&self, combo: &Combo) -> Result<&CacheEntry, CacheError> {
        match self.index.get(combo) {
            Some(&i) => Ok(&self.combos[i]),
            None if combo.len() > self.params.m => Err(CacheError::ArityTooSmall {
                cached: self.params.m,
                requested: combo.len(),
            }),
            None => Err(CacheError::Miss(combo.to_string())),
        }
    }

    /// Combinations searched by a task: arity at most `task.config.m` and a
    /// largest group of at least `task.config.min_group` rows, in
    /// enumeration order.
    pub fn universe(&self, task: &Task) -> Result<Vec<Combo>, CacheError> {
        self.check_arity(task.config.m)?;
        Ok(self
            .combos
            .iter()
            .filter(|e| e.combo.len() <= task.config.m && e.max_group >= task.config.min_group)
            .map(|e| e.combo.clone())
            .collect())
    }
}

/// Count of value tuples of `combo` occurring at least `large_group` times.
pub fn coverage_heuristic(dataset: &Dataset, combo: &Combo, large_group: usize) -> usize {
    dataset
        .group_rows(combo.attrs(), None)
        .sizes()
        .into_iter()
        .filter(|&s| s >= large_group)
        .count()
}

/// `w¹ᵢ − w²ᵢ` per split attribute, where `wⁱ` are least-squares weights
/// predicting the aggregate from standardized split attributes over the rows
/// of group `gᵢ`.
pub fn regscore(dataset: &Dataset, task: &Task) -> BTreeMap<AttrId, f64> {
    let attrs = dataset.split_attributes();
    let gb = dataset.column(task.query.group_by);
    let y = dataset.agg_values();
    let side_rows = |code| -> Vec<usize> {
        (0..dataset.row_count())
            .filter(|&r| gb[r] == code && !y[r].is_nan() && task.query.base_filter.matches(dataset, r))
            .collect()
    };
    let w1 = fit_weights(dataset, attrs, &side_rows(task.claim.g1));
    let w2 = fit_weights(dataset, attrs, &side_rows(task.claim.g2));
    attrs
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, w1[i] - w2[i]))
        .collect()
}

/// Ordinal feature value of one cell.
fn feature_column(dataset: &Dataset, attr: AttrId, rows: &[usize]) -> Vec<f64> {
    let a = dataset.attribute(attr);
    let codes = dataset.column(attr);
    let ordinal_code = |r: usize| -> f64 {
        if codes[r] == NULL_CODE {
            a.code_space() as f64
        } else {
            codes[r] as f64
        }
    };
    match (a.kind, dataset.numeric_column(attr)) {
        (AttrKind::NumericRaw, Some(values)) => {
            let present: Vec<f64> = rows.iter().map(|&r| values[r]).filter(|v| !v.is_nan()).collect();
            let fill = if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            };
            rows.iter()
                .map(|&r| if values[r].is_nan() { fill } else { values[r] })
                .collect()
        }
        (AttrKind::NumericBinned, Some(values)) => match &a.binning {
            Some(rule) => rows
                .iter()
                .map(|&r| {
                    if values[r].is_nan() {
                        -1.0
                    } else {
                        rule.bin_index(values[r]) as f64
                    }
                })
                .collect(),
            None => rows.iter().map(|&r| ordinal_code(r)).collect(),
        },
        _ => rows.iter().map(|&r| ordinal_code(r)).collect(),
    }
}

fn fit_weights(dataset: &Dataset, attrs: &[AttrId], rows: &[usize]) -> Vec<f64> {
    let p = attrs.len();
    let n = rows.len();
    if n < 2 || p == 0 {
        return vec![0.0; p];
    }
    let mut z = DMatrix::<f64>::zeros(n, p);
    for (j, &a) in attrs.iter().enumerate() {
        let col = feature_column(dataset, a, rows);
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
        if sd > 0.0 {
            for (i, x) in col.iter().enumerate() {
                z[(i, j)] = (x - mean) / sd;
            }
        }
    }
    let y = dataset.agg_values();
    let y_mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, rows.iter().map(|&r| y[r] - y_mean));
    // Centered features make the intercept decouple from the weights.
    let gram = z.transpose() * &z + DMatrix::<f64>::identity(p, p) * RIDGE;
    let rhs = z.transpose() * yc;
    match gram.cholesky() {
        Some(ch) => ch.solve(&rhs).iter().copied().collect(),
        None => vec![0.0; p],
    }
}

mod extended_float {
    //! JSON has no infinity; encode it as the string `"inf"`.

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {t:?}"))),
        }
    }
}
