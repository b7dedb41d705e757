//! Property tests over random schemas, queries, and configurations: engine
//! cost monotonicity, relevant-subset equivalence, cache soundness, and the
//! core id/size/similarity invariants.

use std::collections::BTreeSet;

use proptest::prelude::*;

use idxtune_core::engine::{EngineAdapter, VirtualEngine};
use idxtune_core::ir::{
    canonical_index_id, estimate_index_size, Catalog, ClauseRole, ColumnRef, ColumnStats,
    Configuration, IndexDef, LogicalQuery, PredOp, Predicate, QueryId, TableStats, TemplateId,
};
use idxtune_core::selection::{featurize, similarity};
use idxtune_core::sql::templatize;

const COLS: [&str; 5] = ["c0", "c1", "c2", "c3", "c4"];

#[derive(Debug, Clone)]
struct Scenario {
    catalog: Catalog,
    query: LogicalQuery,
    small: Configuration,
    large: Configuration,
}

fn arb_table(name: &'static str) -> impl Strategy<Value = TableStats> {
    (
        1u64..5_000_000,
        proptest::collection::vec(1u64..1000, COLS.len()),
    )
        .prop_map(move |(rows, distincts)| TableStats {
            table: name.into(),
            rows,
            columns: COLS
                .iter()
                .zip(distincts)
                .map(|(c, d)| {
                    (
                        c.to_string(),
                        ColumnStats {
                            width_bytes: 8,
                            distinct_count: d.min(rows).max(1),
                        },
                    )
                })
                .collect(),
        })
}

fn arb_index(tables: Vec<&'static str>) -> impl Strategy<Value = IndexDef> {
    (
        proptest::sample::select(tables),
        proptest::sample::subsequence(COLS.to_vec(), 1..=3),
        proptest::bool::ANY,
        proptest::sample::subsequence(COLS.to_vec(), 0..=2),
    )
        .prop_map(|(table, keys, reverse, included)| {
            let mut keys = keys;
            if reverse {
                keys.reverse();
            }
            IndexDef::new(table, keys, included).unwrap()
        })
}

fn arb_scenario() -> impl Strategy<Value = Scenario> {
    let tables = (arb_table("t"), arb_table("u"));
    let preds = proptest::collection::vec(
        (0usize..COLS.len(), proptest::bool::ANY, 0.0001f64..1.0),
        0..3,
    );
    let shape = (
        proptest::bool::ANY, // join?
        preds,
        proptest::sample::subsequence(COLS.to_vec(), 0..=2), // order_by
        proptest::sample::subsequence(COLS.to_vec(), 0..=2), // projection
        proptest::collection::vec(arb_index(vec!["t", "u"]), 0..5),
        proptest::collection::vec(arb_index(vec!["t", "u"]), 0..4),
    );
    (tables, shape).prop_map(
        |((t, u), (join, preds, order, proj, base_idx, extra_idx))| {
            let catalog = Catalog::new([t, u]).unwrap();
            let tables: Vec<String> = if join {
                vec!["t".into(), "u".into()]
            } else {
                vec!["t".into()]
            };
            let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
            let predicates: Vec<Predicate> = preds
                .into_iter()
                .filter_map(|(ci, is_range, sel)| {
                    let table = tables[ci % tables.len()].clone();
                    let col = COLS[ci].to_string();
                    if !seen.insert((table.clone(), col.clone())) {
                        return None;
                    }
                    let role = if is_range {
                        ClauseRole::FilterRange
                    } else {
                        ClauseRole::FilterEq
                    };
                    Some(Predicate {
                        column: ColumnRef::new(table, col, role),
                        op: if is_range { PredOp::Range } else { PredOp::Eq },
                        selectivity: sel,
                    })
                })
                .collect();
            let join_pred = join.then(|| {
                (
                    ColumnRef::new("t", "c0", ClauseRole::Join),
                    ColumnRef::new("u", "c0", ClauseRole::Join),
                )
            });
            let order_by: Vec<ColumnRef> = order
                .into_iter()
                .map(|c| ColumnRef::new(tables[0].clone(), c, ClauseRole::OrderBy))
                .collect();
            let projected: BTreeSet<ColumnRef> = proj
                .into_iter()
                .map(|c| ColumnRef::new(tables[0].clone(), c, ClauseRole::Projected))
                .collect();
            let query = LogicalQuery {
                id: QueryId("q".into()),
                weight: 1.0,
                tables,
                predicates,
                join_pred,
                group_by: vec![],
                order_by,
                projected,
                template_id: TemplateId("tpl".into()),
            };
            let small = Configuration::from_indexes(base_idx);
            let mut large = small.clone();
            for i in extra_idx {
                large.insert(i);
            }
            Scenario {
                catalog,
                query,
                small,
                large,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cost_monotone_under_configuration_growth(s in arb_scenario()) {
        let engine = VirtualEngine::new(s.catalog.clone());
        let c_small = engine.optimize(&s.query, &s.small).unwrap().estimated_cost;
        let c_large = engine.optimize(&s.query, &s.large).unwrap().estimated_cost;
        prop_assert!(c_large <= c_small + 1e-9 * c_small.abs(),
            "superset cost {c_large} > subset cost {c_small}");
        prop_assert!(c_small > 0.0 && c_large > 0.0);
    }

    #[test]
    fn relevant_subset_equivalence(s in arb_scenario()) {
        let engine = VirtualEngine::new(s.catalog.clone());
        let full = engine.optimize(&s.query, &s.large).unwrap();
        let restricted = s.large.restricted_to(&s.query.tables);
        let reduced = engine.optimize(&s.query, &restricted).unwrap();
        prop_assert_eq!(full.estimated_cost.to_bits(), reduced.estimated_cost.to_bits());
        prop_assert_eq!(full.plan.as_ref().map(|p| &p.signature),
                        reduced.plan.as_ref().map(|p| &p.signature));
    }

    #[test]
    fn cache_soundness(s in arb_scenario()) {
        let engine = VirtualEngine::new(s.catalog.clone());
        let first = engine.optimize(&s.query, &s.large).unwrap();
        let second = engine.optimize(&s.query, &s.large).unwrap();
        prop_assert!(second.from_cache);
        prop_assert_eq!(first.estimated_cost.to_bits(), second.estimated_cost.to_bits());
        prop_assert_eq!(first.plan, second.plan);
    }

    #[test]
    fn whatif_calls_count_distinct_pairs(s in arb_scenario()) {
        let engine = VirtualEngine::new(s.catalog.clone());
        for _ in 0..3 {
            engine.optimize(&s.query, &s.small).unwrap();
            engine.optimize(&s.query, &s.large).unwrap();
        }
        let distinct: BTreeSet<String> = [&s.small, &s.large]
            .iter()
            .map(|c| c.restricted_to(&s.query.tables).signature())
            .collect();
        prop_assert_eq!(engine.accounting().whatif_calls, distinct.len() as u64);
    }

    #[test]
    fn canonical_id_injective(a in arb_index(vec!["t", "u"]), b in arb_index(vec!["t", "u"])) {
        let same_identity = a.table == b.table
            && a.key_columns == b.key_columns
            && a.included_columns == b.included_columns;
        prop_assert_eq!(canonical_index_id(&a) == canonical_index_id(&b), same_identity);
    }

    #[test]
    fn index_size_monotone(rows in 1u64..1_000_000, extra_width in 1u32..64) {
        let mk = |rows: u64, width: u32| {
            let stats = TableStats {
                table: "t".into(),
                rows,
                columns: [
                    ("a".to_string(), ColumnStats { width_bytes: width, distinct_count: 1 }),
                    ("b".to_string(), ColumnStats { width_bytes: 8, distinct_count: 1 }),
                ].into_iter().collect(),
            };
            estimate_index_size(&IndexDef::new("t", ["a"], ["b"]).unwrap(), &stats).unwrap()
        };
        prop_assert!(mk(rows + 1, 8) > mk(rows, 8));
        prop_assert!(mk(rows, 8 + extra_width) > mk(rows, 8));
    }

    #[test]
    fn configuration_signature_order_insensitive(
        indexes in proptest::collection::vec(arb_index(vec!["t", "u"]), 0..6),
        seed in 0u64..1000,
    ) {
        let forward = Configuration::from_indexes(indexes.clone());
        let mut shuffled = indexes;
        // Deterministic pseudo-shuffle.
        if shuffled.len() > 1 {
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
        }
        let rotated = Configuration::from_indexes(shuffled);
        prop_assert_eq!(forward.signature(), rotated.signature());
    }

    #[test]
    fn similarity_symmetric_and_reflexive(s in arb_scenario()) {
        let v = featurize(&s.query, &s.catalog).unwrap();
        if !v.is_empty() {
            prop_assert!((similarity(&v, &v) - 1.0).abs() < 1e-12);
        }
        let other = featurize(&s.query, &s.catalog).unwrap();
        prop_assert_eq!(similarity(&v, &other), similarity(&other, &v));
    }

    #[test]
    fn template_invariant_under_literal_rewrites(s in arb_scenario(), sels in proptest::collection::vec(0.001f64..1.0, 3)) {
        let t1 = templatize(&s.query);
        let mut rewritten = s.query.clone();
        for (p, sel) in rewritten.predicates.iter_mut().zip(sels.iter()) {
            p.selectivity = *sel;
        }
        let t2 = templatize(&rewritten);
        prop_assert_eq!(t1.template_id, t2.template_id);
    }
}

mod plan_perturbations {
    use idxtune_core::engine::EngineCapabilities;
    use idxtune_core::ir::TuningConstraints;
    use idxtune_core::plan::{build_plan, CompressionRequest, FeatureRequest, TuningRequest};
    use proptest::prelude::*;

    fn full_plan() -> idxtune_core::plan::TuningPlan {
        let mut r = TuningRequest::new(TuningConstraints::new(5).unwrap());
        r.compression = CompressionRequest::Isum { target: 20 };
        r.filter = FeatureRequest::On;
        r.cost_models = FeatureRequest::On;
        r.qpr = FeatureRequest::On;
        let caps = EngineCapabilities {
            supports_whatif: true,
            supports_execution: true,
            supports_plan_descriptor: true,
            supports_hypothetical_index: true,
        };
        build_plan(&r, &caps, 150).unwrap()
    }

    proptest! {
        // Any single edge removal leaves an input port unbound; any edge
        // duplication double-binds one. Both must fail validation.
        #[test]
        fn perturbed_plans_fail_validation(idx in 0usize..100, duplicate in proptest::bool::ANY) {
            let mut plan = full_plan();
            prop_assume!(!plan.edges.is_empty());
            let i = idx % plan.edges.len();
            if duplicate {
                let e = plan.edges[i].clone();
                plan.edges.push(e);
            } else {
                plan.edges.remove(i);
            }
            prop_assert!(plan.validate().is_err());
        }
    }
}
