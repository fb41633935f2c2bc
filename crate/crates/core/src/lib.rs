//! Anytime top-k search for query refinements that endorse a claim.
//!
//! A claim states that, under a group-by aggregate query, group `g1`
//! aggregates higher than group `g2`. A refinement adds conjunctive equality
//! predicates to the query; it endorses the claim if the comparison holds
//! on the narrowed data with both groups keeping at least `M` rows. This
//! crate enumerates endorsing refinements, scores them with naturalness
//! measures, and streams the best ones early by ordering the search over
//! attribute combinations.
//!
//! ```
//! use claim_endorse::{fixtures, Combo, find_predicates};
//!
//! let ds = fixtures::table1();
//! let task = fixtures::table1_task().validate(&ds).unwrap();
//! let occupation = ds.attribute_by_name("Occupation").unwrap().id;
//! let found = find_predicates(&ds, &task, &Combo::new(vec![occupation]));
//! let r = &found.refinements[0];
//! assert_eq!(r.predicate().describe(&ds), "Occupation=CS&Math");
//! assert_eq!((r.agg1(), r.agg2()), (92.5, 76.0));
//! ```
//!
//! The guide in `book/` walks through each stage.

pub mod aggregate;
pub mod claim;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod measures;
pub mod precompute;
pub mod prioritize;

pub use aggregate::{enumerate_combos, find_predicates, find_predicates_predicate_level, Combo, ComboResult, Searcher};
pub use claim::{AggFn, Atom, AuxStats, Baseline, Predicate, Refinement, Task, TaskConfig, TaskSpec};
pub use dataset::{AttrId, AttrKind, Dataset, Schema};
pub use engine::{Engine, EngineOptions, RunSummary};
pub use measures::{EmbeddingTable, Measure, MeasureVector, ScoreKey};
pub use precompute::{CacheParams, PrecomputeCache};
pub use prioritize::{build_order, PlanContext, PriorityPlan, Strategy};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/getting-started.md")]
    mod getting_started {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/prioritization.md")]
    mod prioritization {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
