//! Retrieval metrics against brute-force evaluation and their invariants.

mod common;

use common::{random_instance, run_from_lists};
use legalgraph::eval::{metrics_at_k, two_stage, IdcgMode, MapNorm, MetricOptions, Qrels};
use proptest::prelude::*;

#[test]
fn worked_example() {
    assert!(common::worked_example_ok());
}

#[test]
fn fifty_random_instances_match_brute_force() {
    for seed in 0..50 {
        let e = common::random_instance_error(seed);
        assert!(e <= 1e-9, "seed {seed}: {e}");
    }
}

#[test]
fn perfect_and_empty_runs() {
    let mut qrels = Qrels::default();
    qrels.insert("q1", "a");
    qrels.insert("q1", "b");
    qrels.insert("q2", "c");
    qrels.insert("q2", "d");
    let perfect = run_from_lists(&[
        ("q1".into(), vec!["b".into(), "a".into(), "x".into()]),
        ("q2".into(), vec!["c".into(), "d".into()]),
    ]);
    let m = metrics_at_k(&perfect, &qrels, 2, &MetricOptions::default()).unwrap().metrics;
    assert!(m.as_array().iter().all(|&x| x == 1.0), "{m:?}");
    let miss = run_from_lists(&[("q1".into(), vec!["z".into()]), ("q2".into(), vec![])]);
    let m = metrics_at_k(&miss, &qrels, 3, &MetricOptions::default()).unwrap().metrics;
    assert!(m.as_array().iter().all(|&x| x == 0.0));
}

#[test]
fn hits_normalisation_of_average_precision() {
    let (run, qrels) = common::worked_example();
    let opts = MetricOptions {
        map_norm: MapNorm::Hits,
        ..MetricOptions::default()
    };
    let m = metrics_at_k(&run, &qrels, 5, &opts).unwrap().metrics;
    assert!((m.map - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
}

#[test]
fn identity_rerank_keeps_first_stage_order() {
    let (run, _, _, _) = random_instance(3);
    let scores: std::collections::HashMap<(String, String), f64> = run
        .map
        .iter()
        .flat_map(|(q, l)| l.iter().map(move |s| ((q.clone(), s.id.clone()), s.score)))
        .collect();
    let out = two_stage(&run, |q, c| Ok(scores[&(q.to_string(), c.to_string())]), 2).unwrap();
    let mut expect = run.clone();
    expect.truncate(2);
    assert_eq!(out.run, expect);
}

proptest! {
    #[test]
    fn metrics_are_bounded_and_counts_integral(seed in 0u64..100_000) {
        let (run, qrels, _, k) = random_instance(seed);
        let ev = metrics_at_k(&run, &qrels, k, &MetricOptions::default()).unwrap();
        for x in ev.metrics.as_array() {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        for q in &ev.per_query {
            let tp = q.precision * k as f64;
            prop_assert!((tp - tp.round()).abs() < 1e-9);
            let tr = q.recall * q.relevant as f64;
            prop_assert!((tr - tr.round()).abs() < 1e-9);
            prop_assert_eq!(tp.round() as usize, q.true_positives);
        }
    }

    /// Renaming candidates bijectively changes nothing.
    #[test]
    fn relabelling_invariance(seed in 0u64..100_000) {
        let (run, qrels, lists, k) = random_instance(seed);
        let rename = |c: &str| format!("renamed-{}", c.chars().rev().collect::<String>());
        let lists2: Vec<(String, Vec<String>)> =
            lists.iter().map(|(q, l)| (q.clone(), l.iter().map(|c| rename(c)).collect())).collect();
        let mut qrels2 = Qrels::default();
        for (q, rel) in &qrels.map {
            for c in rel {
                qrels2.insert(q.clone(), rename(c));
            }
        }
        let a = metrics_at_k(&run, &qrels, k, &MetricOptions::default()).unwrap().metrics;
        let b = metrics_at_k(&run_from_lists(&lists2), &qrels2, k, &MetricOptions::default()).unwrap().metrics;
        prop_assert_eq!(a, b);
    }

    /// With the ideal taken over all relevant cases, NDCG is 1 exactly when
    /// the first `min(K, |relevant|)` ranks are all relevant.
    #[test]
    fn ndcg_is_one_iff_top_ranks_relevant(seed in 0u64..100_000) {
        let (run, qrels, lists, k) = random_instance(seed);
        let opts = MetricOptions { idcg: IdcgMode::AllRelevant, ..MetricOptions::default() };
        let ev = metrics_at_k(&run, &qrels, k, &opts).unwrap();
        for (m, (q, ranked)) in ev.per_query.iter().zip(&lists) {
            let rel = qrels.relevant(q).unwrap();
            let need = k.min(rel.len());
            let full = ranked.len() >= need && ranked[..need].iter().all(|c| rel.contains(c));
            prop_assert_eq!((m.ndcg - 1.0).abs() < 1e-12, full);
        }
    }
}
