mod common;

use claim_endorse::{enumerate_combos, fixtures, AggFn, Searcher, TaskConfig, TaskSpec};
use proptest::prelude::*;

use common::Shape;

fn kernel_refinements(rel: &common::Relation, spec: &TaskSpec) -> Vec<(common::Pairs, f64, f64, usize, usize, usize)> {
    let ds = rel.dataset();
    let task = spec.validate(&ds).unwrap();
    let searcher = Searcher::new(&ds, &task);
    let mut out: Vec<_> = enumerate_combos(&ds, task.config.m, task.config.min_group)
        .iter()
        .flat_map(|c| searcher.find_predicates(c).refinements)
        .map(|r| (r.predicate().named_pairs(&ds), r.agg1(), r.agg2(), r.n1(), r.n2(), r.covered()))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn assert_matches_brute_force(rel: &common::Relation, spec: &TaskSpec) {
    let got = kernel_refinements(rel, spec);
    let brute = common::brute_force(rel, spec);
    assert_eq!(
        got.iter().map(|r| &r.0).collect::<Vec<_>>(),
        brute.keys().collect::<Vec<_>>(),
        "refinement sets differ"
    );
    for (pairs, agg1, agg2, n1, n2, covered) in &got {
        let b = &brute[pairs];
        assert_eq!((*n1, *n2, *covered), (b.n1, b.n2, b.covered), "{pairs:?}");
        assert!(common::close(*agg1, b.agg1, 1e-9), "{pairs:?}: {agg1} vs {}", b.agg1);
        assert!(common::close(*agg2, b.agg2, 1e-9), "{pairs:?}: {agg2} vs {}", b.agg2);
    }
}

fn table1_relation() -> common::Relation {
    let mut reader = csv::Reader::from_reader(fixtures::TABLE1_CSV.as_bytes());
    let header = reader.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect();
    common::Relation {
        header,
        rows,
        schema: fixtures::table1_schema(),
    }
}

#[test]
fn table1_every_function_matches_brute_force() {
    let rel = table1_relation();
    for function in AggFn::ALL {
        for (g1, g2) in [("Master's degree", "Bachelor's degree"), ("Bachelor's degree", "Master's degree")] {
            let spec = TaskSpec::new(function, g1, g2).with_config(TaskConfig {
                k: 5,
                m: 3,
                min_group: 1,
                ..TaskConfig::default()
            });
            assert_matches_brute_force(&rel, &spec);
        }
    }
}

#[test]
fn table1_m1_refinements() {
    let rel = table1_relation();
    let got = kernel_refinements(&rel, &fixtures::table1_task());
    let names: Vec<String> = got
        .iter()
        .map(|r| r.0.iter().map(|(a, v)| format!("{a}={v}")).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(names, ["Occupation=CS&Math", "Sex=M"]);
    assert_eq!((got[0].1, got[0].2), (92.5, 76.0));
}

#[test]
fn filtered_task_respects_the_base_filter() {
    let rel = table1_relation();
    let spec = fixtures::table1_task().with_filter("Sex", "F");
    assert_matches_brute_force(&rel, &spec);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_relations_match_brute_force(
        seed in any::<u64>(),
        rows in 8usize..160,
        attrs in 1usize..6,
        function in 0usize..6,
        m in 1usize..4,
        nulls in prop::bool::ANY,
    ) {
        let mut rng = common::rng(seed);
        let rel = common::random_relation(&mut rng, Shape {
            rows,
            split_attrs: attrs,
            min_cardinality: 1,
            max_cardinality: 4,
            null_rate: if nulls { 0.15 } else { 0.0 },
        });
        let spec = common::random_task(&mut rng, AggFn::ALL[function], m);
        assert_matches_brute_force(&rel, &spec);
    }

    #[test]
    fn both_kernel_paths_agree(seed in any::<u64>(), rows in 8usize..120, function in 0usize..6) {
        let mut rng = common::rng(seed);
        let rel = common::random_relation(&mut rng, Shape {
            rows,
            split_attrs: 4,
            min_cardinality: 1,
            max_cardinality: 3,
            null_rate: 0.1,
        });
        let spec = common::random_task(&mut rng, AggFn::ALL[function], 2);
        let ds = rel.dataset();
        let task = spec.validate(&ds).unwrap();
        let searcher = Searcher::new(&ds, &task);
        for combo in enumerate_combos(&ds, 2, task.config.min_group) {
            let a = searcher.find_predicates(&combo).refinements;
            let b = searcher.find_predicates_predicate_level(&combo).refinements;
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(x.approx_eq(y, 1e-12), "{:?} vs {:?}", x, y);
            }
        }
    }
}
