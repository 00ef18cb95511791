use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::kg::{Edge, KnowledgeGraph, Node, NodeKind, Relation};

fn fl_graph(n: usize) -> KnowledgeGraph {
    let nodes = (0..n)
        .map(|i| Node::functional_location(format!("f{i:02}"), format!("C{i}"), "d"))
        .collect();
    let edges = (1..n)
        .map(|i| Edge::new(format!("f{i:02}"), Relation::PartOf, "f00"))
        .collect();
    KnowledgeGraph::new(nodes, edges).unwrap().0
}

fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
    let dim = rows[0].1.len();
    EmbeddingTable::from_rows(
        dim,
        rows.iter().map(|(id, _)| id.to_string()).collect(),
        rows.iter().flat_map(|(_, v)| v.iter().copied()).collect(),
    )
    .unwrap()
}

#[test]
fn random_init_is_seeded_and_bounded() {
    let g = fl_graph(12);
    let cfg = GeTrainConfig {
        dim: 16,
        rng_seed: 7,
        ..Default::default()
    };
    let a = init_embeddings(&g, &cfg, None).unwrap();
    let b = init_embeddings(&g, &cfg, None).unwrap();
    assert_eq!(a, b);
    let bound = 1.0 / 16.0;
    assert!(a.values().iter().all(|v| (-bound..=bound).contains(v)));
    assert!(Relation::ALL.iter().all(|&r| a.relation(r).iter().all(|&v| v == 0.0)));
}

#[test]
fn text_init_copies_rows() {
    let g = fl_graph(3);
    let v = vec![0.5, -0.25];
    let tv: HashMap<String, Vec<f64>> = g.nodes().map(|n| (n.id.clone(), v.clone())).collect();
    let cfg = GeTrainConfig {
        dim: 2,
        init_mode: InitMode::TextVectors,
        ..Default::default()
    };
    let t = init_embeddings(&g, &cfg, Some(&tv)).unwrap();
    assert_eq!(t.vector("f00"), t.vector("f01"));
    assert_eq!(t.vector("f02").unwrap(), &v[..]);

    let mut missing = tv.clone();
    missing.remove("f01");
    assert!(matches!(init_embeddings(&g, &cfg, Some(&missing)), Err(crate::Error::MissingVector(_))));
    let wrong: HashMap<_, _> = tv.keys().map(|k| (k.clone(), vec![1.0; 3])).collect();
    assert!(matches!(
        init_embeddings(&g, &cfg, Some(&wrong)),
        Err(crate::Error::DimensionMismatch { .. })
    ));
}

#[test]
fn score_edge_examples() {
    let mut t = table(&[("a", &[1.0, 0.0]), ("b", &[1.0, 0.0]), ("c", &[0.0, 1.0]), ("d", &[1.0, 1.0])]);
    assert_eq!(t.score_edge("a", Relation::PartOf, "b").unwrap(), 1.0);
    assert_eq!(t.score_edge("a", Relation::PartOf, "c").unwrap(), 0.0);
    t.set_relation(Relation::PartOf, vec![0.0, 1.0]).unwrap();
    assert!((t.score_edge("a", Relation::PartOf, "d").unwrap() - 1.0).abs() < 1e-12);
    assert!(t.score_edge("a", Relation::PartOf, "zz").is_err());
}

#[test]
fn zero_vector_scores_zero() {
    let t = table(&[("a", &[0.0, 0.0]), ("b", &[1.0, 0.0])]);
    assert_eq!(t.score_edge("a", Relation::PartOf, "b").unwrap(), 0.0);
}

#[test]
fn zero_epochs_is_identity() {
    let g = fl_graph(5);
    let cfg = GeTrainConfig {
        dim: 8,
        epochs: 0,
        ..Default::default()
    };
    let t = init_embeddings(&g, &cfg, None).unwrap();
    assert_eq!(train_graph_embeddings(&g, &t, &cfg).unwrap(), t);
}

#[test]
fn edgeless_graph_is_an_error() {
    let (g, _) = KnowledgeGraph::new(vec![Node::functional_location("a", "A", "x")], vec![]).unwrap();
    let cfg = GeTrainConfig {
        dim: 4,
        ..Default::default()
    };
    let t = init_embeddings(&g, &cfg, None).unwrap();
    assert!(train_graph_embeddings(&g, &t, &cfg).is_err());
}

#[test]
fn single_edge_outranks_its_corruptions() {
    let nodes = (0..8)
        .map(|i| Node::functional_location(format!("f{i}"), format!("C{i}"), "d"))
        .collect();
    let (g, _) = KnowledgeGraph::new(nodes, vec![Edge::new("f1", Relation::PartOf, "f0")]).unwrap();
    let cfg = GeTrainConfig {
        dim: 8,
        epochs: 200,
        rng_seed: 3,
        ..Default::default()
    };
    let t = train_graph_embeddings(&g, &init_embeddings(&g, &cfg, None).unwrap(), &cfg).unwrap();
    let truth = t.score_edge("f1", Relation::PartOf, "f0").unwrap();
    for i in 2..8 {
        assert!(truth > t.score_edge("f1", Relation::PartOf, &format!("f{i}")).unwrap());
    }
}

#[test]
fn training_is_deterministic_and_leaves_graph_alone() {
    let g = fl_graph(10);
    let before = g.clone();
    let cfg = GeTrainConfig {
        dim: 8,
        epochs: 5,
        rng_seed: 11,
        ..Default::default()
    };
    let t0 = init_embeddings(&g, &cfg, None).unwrap();
    let a = train_graph_embeddings(&g, &t0, &cfg).unwrap();
    let b = train_graph_embeddings(&g, &t0, &cfg).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, t0);
    assert_eq!(g, before);
}

#[test]
fn perfect_model_scores_one_everywhere() {
    let t = table(&[("s", &[1.0, 0.0]), ("d", &[1.0, 0.0]), ("x", &[0.0, 1.0]), ("y", &[-1.0, 0.0])]);
    let pool = CandidatePool::new(["d", "x", "y"].map(|id| (id, NodeKind::FunctionalLocation)));
    let r = eval_link_prediction(&t, &[Edge::new("s", Relation::PartOf, "d")], &pool, None).unwrap();
    assert_eq!((r.mrr, r.hits_at_1, r.hits_at_10, r.auc), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn third_of_ten() {
    // True dst at angle 2, corruptions at angles 0, 1, 3..9 (of 10).
    let angle = |k: usize| {
        let a = k as f64 * 0.1;
        [a.cos(), a.sin()]
    };
    let vecs: Vec<(String, [f64; 2])> = (0..10).map(|k| (format!("n{k}"), angle(k))).collect();
    let mut rows: Vec<(&str, &[f64])> = vecs.iter().map(|(id, v)| (id.as_str(), &v[..])).collect();
    let src = [1.0, 0.0];
    rows.push(("src", &src));
    let t = table(&rows);
    let pool = CandidatePool::new(vecs.iter().map(|(id, _)| (id.clone(), NodeKind::FunctionalLocation)));
    let r = eval_link_prediction(&t, &[Edge::new("src", Relation::PartOf, "n2")], &pool, None).unwrap();
    assert!((r.mrr - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!((r.hits_at_1, r.hits_at_10), (0.0, 1.0));
}

#[test]
fn auc_counts_fraction_below() {
    // cos scores relative to src=(1,0): dst 0.9, corruptions 0.5 and 0.95.
    let unit = |c: f64| [c, (1.0 - c * c).sqrt()];
    let (d, a, b) = (unit(0.9), unit(0.5), unit(0.95));
    let t = table(&[("s", &[1.0, 0.0]), ("d", &d), ("a", &a), ("b", &b)]);
    let pool = CandidatePool::new(["d", "a", "b"].map(|id| (id, NodeKind::FunctionalLocation)));
    let r = eval_link_prediction(&t, &[Edge::new("s", Relation::PartOf, "d")], &pool, None).unwrap();
    assert!((r.auc - 0.5).abs() < 1e-12);
}

#[test]
fn ties_rank_pessimistically() {
    let t = table(&[("s", &[1.0, 0.0]), ("d", &[1.0, 0.0]), ("e", &[2.0, 0.0])]);
    let pool = CandidatePool::new(["d", "e"].map(|id| (id, NodeKind::FunctionalLocation)));
    let r = eval_link_prediction(&t, &[Edge::new("s", Relation::PartOf, "d")], &pool, None).unwrap();
    assert_eq!((r.mrr, r.auc), (0.5, 0.5));
}

#[test]
fn eval_errors() {
    let t = table(&[("s", &[1.0, 0.0]), ("d", &[1.0, 0.0])]);
    let pool = CandidatePool::new([("d", NodeKind::FunctionalLocation)]);
    assert!(eval_link_prediction(&t, &[], &pool, None).is_err());
    let e = Edge::new("s", Relation::PartOf, "d");
    assert!(matches!(
        eval_link_prediction(&t, std::slice::from_ref(&e), &pool, Some(std::slice::from_ref(&e))),
        Err(crate::Error::LeakedTestEdge(_))
    ));
}

#[test]
fn split_sizes_and_determinism() {
    let g = fl_graph(101);
    assert_eq!(g.edge_count(), 100);
    let (train, test) = split_edges(&g, 0.01, 5).unwrap();
    assert_eq!((train.len(), test.len()), (99, 1));
    assert_eq!(split_edges(&g, 0.01, 5).unwrap(), (train.clone(), test.clone()));
    let (_, t2) = split_edges(&g, 0.3, 5).unwrap();
    assert_eq!(t2.len(), 30);
    let mut all: Vec<_> = train.into_iter().chain(test).collect();
    all.sort();
    let mut orig = g.edges().to_vec();
    orig.sort();
    assert_eq!(all, orig);
    assert!(split_edges(&g, 0.0, 1).is_err());
    assert!(split_edges(&g, 1.0, 1).is_err());
    assert!(split_edges(&fl_graph(1), 0.5, 1).is_err());
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = table(&[("a", &[0.5, 0.25]), ("b", &[-1.0, 2.0])]);
    t.set_relation(Relation::ReportsAbout, vec![0.125, 0.0]).unwrap();
    t.save(dir.path()).unwrap();
    assert_eq!(EmbeddingTable::load(dir.path()).unwrap(), t);
}

/// Brute force: sort every candidate score together with the truth, placing
/// the truth after equal scores, and read off its position.
fn oracle(t: &EmbeddingTable, test: &[Edge], pool: &[String]) -> (f64, f64, f64, f64) {
    let (mut rr, mut h1, mut h10, mut auc) = (0.0, 0.0, 0.0, 0.0);
    for e in test {
        let truth = t.score_edge(&e.src, e.rel, &e.dst).unwrap();
        let mut scored: Vec<(f64, bool)> = pool
            .iter()
            .filter(|c| **c != e.dst && **c != e.src)
            .map(|c| (t.score_edge(&e.src, e.rel, c).unwrap(), false))
            .collect();
        let n_corr = scored.len();
        let pairs: f64 = scored
            .iter()
            .map(|&(s, _)| if s < truth { 1.0 } else if s == truth { 0.5 } else { 0.0 })
            .sum();
        scored.push((truth, true));
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let rank = scored.iter().position(|x| x.1).unwrap() + 1;
        rr += 1.0 / rank as f64;
        h1 += (rank <= 1) as u8 as f64;
        h10 += (rank <= 10) as u8 as f64;
        auc += if n_corr == 0 { 1.0 } else { pairs / n_corr as f64 };
    }
    let n = test.len() as f64;
    (rr / n, h1 / n, h10 / n, auc / n)
}

proptest! {
    #[test]
    fn eval_matches_brute_force(
        raw in prop::collection::vec(prop::collection::vec(-2i8..=2, 3), 4..20),
        picks in prop::collection::vec((0usize..100, 0usize..100), 1..6),
    ) {
        // Small integer coordinates make exact ties common.
        let ids: Vec<String> = (0..raw.len()).map(|i| format!("n{i:02}")).collect();
        let t = EmbeddingTable::from_rows(
            3,
            ids.clone(),
            raw.iter().flatten().map(|&v| v as f64).collect(),
        ).unwrap();
        let n = ids.len();
        let test: Vec<Edge> = picks
            .iter()
            .map(|&(a, b)| (a % n, b % n))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| Edge::new(&ids[a], Relation::PartOf, &ids[b]))
            .collect();
        prop_assume!(!test.is_empty());
        let pool = CandidatePool::new(ids.iter().map(|i| (i.clone(), NodeKind::FunctionalLocation)));
        let got = eval_link_prediction(&t, &test, &pool, None).unwrap();
        let want = oracle(&t, &test, &ids);
        prop_assert_eq!((got.mrr, got.hits_at_1, got.hits_at_10, got.auc), want);
    }
}
