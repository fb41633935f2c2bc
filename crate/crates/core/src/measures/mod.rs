//! Naturalness measures of a refinement.
//!
//! Attribute-level measures ([`Measure::Anova`], [`Measure::Mi`]) depend only
//! on the refinement's attribute set and come from the precompute cache.
//! Predicate-level measures ([`Measure::Coverage`], [`Measure::StatSig`],
//! [`Measure::EmbSim`]) are computed per refinement.

pub mod dependence;
pub mod embedding;
pub mod generality;
pub mod special;
pub mod stattest;

use serde::{Deserialize, Serialize};

pub use dependence::{anova_raw, mi_raw, normalize};
pub use embedding::{cosine, EmbeddingTable};
pub use generality::{generality_filter, retain_most_general};

use crate::claim::{AggFn, AuxStats, Refinement, Task};
use crate::dataset::Dataset;

/// A naturalness measure. Declaration order is the serial prioritization
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Anova,
    Mi,
    #[serde(rename = "embsim")]
    EmbSim,
    #[serde(rename = "statsig")]
    StatSig,
    Coverage,
}

impl Measure {
    pub const ALL: [Measure; 5] = [
        Measure::Anova,
        Measure::Mi,
        Measure::EmbSim,
        Measure::StatSig,
        Measure::Coverage,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Anova => "anova",
            Measure::Mi => "mi",
            Measure::EmbSim => "embsim",
            Measure::StatSig => "statsig",
            Measure::Coverage => "coverage",
        }
    }

    pub fn parse(s: &str) -> Option<Measure> {
        Measure::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A score tracked by the engine: one measure or the average naturalness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKey {
    Anova,
    Mi,
    #[serde(rename = "embsim")]
    EmbSim,
    #[serde(rename = "statsig")]
    StatSig,
    Coverage,
    Average,
}

impl ScoreKey {
    pub const ALL: [ScoreKey; 6] = [
        ScoreKey::Anova,
        ScoreKey::Mi,
        ScoreKey::EmbSim,
        ScoreKey::StatSig,
        ScoreKey::Coverage,
        ScoreKey::Average,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKey::Average => "average",
            other => Measure::try_from(other).expect("non-average key").name(),
        }
    }
}

impl From<Measure> for ScoreKey {
    fn from(m: Measure) -> Self {
        match m {
            Measure::Anova => ScoreKey::Anova,
            Measure::Mi => ScoreKey::Mi,
            Measure::EmbSim => ScoreKey::EmbSim,
            Measure::StatSig => ScoreKey::StatSig,
            Measure::Coverage => ScoreKey::Coverage,
        }
    }
}

impl TryFrom<ScoreKey> for Measure {
    type Error = ();

    fn try_from(key: ScoreKey) -> Result<Self, ()> {
        Ok(match key {
            ScoreKey::Anova => Measure::Anova,
            ScoreKey::Mi => Measure::Mi,
            ScoreKey::EmbSim => Measure::EmbSim,
            ScoreKey::StatSig => Measure::StatSig,
            ScoreKey::Coverage => Measure::Coverage,
            ScoreKey::Average => return Err(()),
        })
    }
}

impl std::fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scores of one refinement; `None` marks a measure that is inactive for the
/// task or undefined for this refinement.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasureVector {
    pub coverage: Option<f64>,
    pub statsig: Option<f64>,
    pub embsim: Option<f64>,
    pub mi: Option<f64>,
    pub anova: Option<f64>,
    /// Mean of the present measure scores.
    pub average: Option<f64>,
}

impl MeasureVector {
    pub fn get(&self, key: ScoreKey) -> Option<f64> {
        match key {
            ScoreKey::Anova => self.anova,
            ScoreKey::Mi => self.mi,
            ScoreKey::EmbSim => self.embsim,
            ScoreKey::StatSig => self.statsig,
            ScoreKey::Coverage => self.coverage,
            ScoreKey::Average => self.average,
        }
    }

    pub fn measure(&self, m: Measure) -> Option<f64> {
        self.get(m.into())
    }

    fn set(&mut self, m: Measure, value: Option<f64>) {
        let slot = match m {
            Measure::Anova => &mut self.anova,
            Measure::Mi => &mut self.mi,
            Measure::EmbSim => &mut self.embsim,
            Measure::StatSig => &mut self.statsig,
            Measure::Coverage => &mut self.coverage,
        };
        *slot = value;
    }

    /// Recomputes `average` from the present measure entries.
    pub fn with_average(mut self) -> Self {
        let present: Vec<f64> = Measure::ALL.iter().filter_map(|&m| self.measure(m)).collect();
        self.average = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        self
    }
}

/// Normalized attribute-level scores of one combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttrScores {
    pub mi: f64,
    pub anova: f64,
}

/// Fraction of the relation covered by the base filter and the predicate.
pub fn coverage(refinement: &Refinement, dataset: &Dataset) -> f64 {
    if dataset.row_count() == 0 {
        return 0.0;
    }
    refinement.covered() as f64 / dataset.row_count() as f64
}

/// Significance of the refined gap, for Average (Welch t-test) and Median
/// (median test). `None` for other functions or too few values.
pub fn statsig(refinement: &Refinement, agg_fn: AggFn) -> Option<f64> {
    match (agg_fn, refinement.stats()) {
        (AggFn::Average, AuxStats::StdDev { s1: Some(s1), s2: Some(s2) }) => stattest::statsig_avg(
            refinement.agg1(),
            *s1,
            refinement.n1(),
            refinement.agg2(),
            *s2,
            refinement.n2(),
        ),
        (
            AggFn::Median,
            &AuxStats::MedianSplit {
                above1,
                below1,
                above2,
                below2,
            },
        ) => Some(stattest::statsig_med(above1, below1, above2, below2)),
        _ => None,
    }
}

/// Computes the task's active measures for refinements of one dataset.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    dataset: &'a Dataset,
    task: &'a Task,
    embeddings: Option<&'a EmbeddingTable>,
    active: Vec<Measure>,
}

impl<'a> Scorer<'a> {
    pub fn new(dataset: &'a Dataset, task: &'a Task, embeddings: Option<&'a EmbeddingTable>) -> Self {
        Self {
            dataset,
            task,
            embeddings,
            active: task.active_measures(embeddings.is_some()),
        }
    }

    pub fn active(&self) -> &[Measure] {
        &self.active
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn score(&self, refinement: &Refinement, attr: AttrScores) -> MeasureVector {
        let mut v = MeasureVector::default();
        for &m in &self.active {
            let value = match m {
                Measure::Anova => Some(attr.anova),
                Measure::Mi => Some(attr.mi),
                Measure::Coverage => Some(coverage(refinement, self.dataset)),
                Measure::StatSig => statsig(refinement, self.task.query.agg_fn),
                Measure::EmbSim => self
                    .embeddings
                    .and_then(|t| embedding::embsim(self.dataset, t, refinement.predicate())),
            };
            v.set(m, value);
        }
        v.with_average()
    }
}
