use std::collections::{BTreeMap, HashMap};

use graphtrip_core::kg::{
    build_graph, expand_context, predict_links, Edge, KnowledgeGraph, LexicalMatcher, Node, NodeKind, Relation,
};
use graphtrip_core::synth::{generate_plant, PlantConfig};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct RawGraph {
    n_fl: usize,
    parents: Vec<usize>,
    logs: Vec<(Vec<usize>, Option<i64>, Vec<usize>)>,
    related: Vec<(usize, usize)>,
}

fn raw_graph() -> impl Strategy<Value = RawGraph> {
    (1usize..6, 0usize..10).prop_flat_map(|(n_fl, n_logs)| {
        let parents = prop::collection::vec(0usize..100, n_fl);
        let log = (
            prop::collection::vec(0usize..n_fl, 0..3),
            prop::option::of(0i64..400_000),
            prop::collection::vec(0usize..n_fl, 0..3),
        );
        let logs = prop::collection::vec(log, n_logs);
        let related = prop::collection::vec((0usize..10, 0usize..10), 0..6);
        (Just(n_fl), parents, logs, related).prop_map(|(n_fl, parents, logs, related)| RawGraph {
            n_fl,
            parents,
            logs,
            related,
        })
    })
}

const WORDS: [&str; 4] = ["pumpe", "läuft", "heiß", "undicht"];

/// FL i may hang under any FL with a smaller index, so part_of stays a forest.
/// Logs carry explicit edges plus mentions of FL codes in their text.
fn materialize(s: &RawGraph) -> KnowledgeGraph {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for i in 0..s.n_fl {
        nodes.push(Node::functional_location(format!("f{i}"), format!("X{i}"), format!("Anlage {i}")));
        if i > 0 && !s.parents[i].is_multiple_of(3) {
            edges.push(Edge::new(format!("f{i}"), Relation::PartOf, format!("f{}", s.parents[i] % i)));
        }
    }
    for (j, (linked, ts, mentions)) in s.logs.iter().enumerate() {
        let mut text = WORDS[j % WORDS.len()].to_string();
        for m in mentions {
            text.push_str(&format!(" x{m} {}", WORDS[(j + m) % WORDS.len()]));
        }
        let mut node = Node::text_log(format!("t{j}"), text);
        if let Some(ts) = ts {
            node = node.with_ts(*ts);
        }
        nodes.push(node);
        for f in linked {
            edges.push(Edge::new(format!("t{j}"), Relation::ReportsAbout, format!("f{f}")));
        }
    }
    let n_logs = s.logs.len();
    for &(a, b) in &s.related {
        if n_logs > 0 && a % n_logs != b % n_logs {
            edges.push(Edge::new(format!("t{}", a % n_logs), Relation::RelatedTo, format!("t{}", b % n_logs)));
        }
    }
    KnowledgeGraph::new(nodes, edges).expect("generated graph is valid").0
}

fn assert_kg_invariants(g: &KnowledgeGraph) {
    let mut seen = std::collections::HashSet::new();
    for e in g.edges() {
        let src = g.node(&e.src).expect("src exists");
        let dst = g.node(&e.dst).expect("dst exists");
        assert_ne!(e.src, e.dst, "self loop {e:?}");
        assert_eq!((src.kind, dst.kind), e.rel.endpoint_kinds(), "{e:?}");
        assert!(seen.insert(e.clone()), "duplicate {e:?}");
    }
    for n in g.nodes() {
        match n.kind {
            NodeKind::FunctionalLocation => assert!(n.code.as_deref().is_some_and(|c| !c.is_empty())),
            NodeKind::TextLog => assert!(!n.text.is_empty()),
        }
    }
    // Walking part_of upwards from any FL must terminate.
    for fl in g.nodes_of_kind(NodeKind::FunctionalLocation) {
        let mut at = fl.id.clone();
        for step in 0.. {
            assert!(step <= g.node_count(), "part_of cycle through {}", fl.id);
            match g.out_neighbors(&at, Relation::PartOf).next() {
                Some(up) => at = up.to_string(),
                None => break,
            }
        }
    }
}

fn assert_filtered(g: &KnowledgeGraph) {
    for log in g.nodes_of_kind(NodeKind::TextLog) {
        assert!(g.out_neighbors(&log.id, Relation::ReportsAbout).next().is_some(), "{}", log.id);
    }
}

fn relation_counts(g: &KnowledgeGraph) -> BTreeMap<Relation, usize> {
    g.edge_count_by_relation()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn build_graph_is_idempotent(shape in raw_graph()) {
        let raw = materialize(&shape);
        let once = build_graph(&raw);
        prop_assert_eq!(build_graph(&once), once.clone());
        assert_kg_invariants(&once);
        assert_filtered(&once);
        prop_assert_eq!(
            once.nodes_of_kind(NodeKind::FunctionalLocation).count(),
            raw.nodes_of_kind(NodeKind::FunctionalLocation).count()
        );
    }

    #[test]
    fn predict_links_only_adds_valid_edges(shape in raw_graph(), window in 0i64..200_000) {
        let raw = materialize(&shape);
        let matcher = LexicalMatcher { window_secs: window };
        for g in [raw.clone(), build_graph(&raw)] {
            let (out, _) = predict_links(&g, &matcher);
            assert_kg_invariants(&out);
            for e in g.edges() {
                prop_assert!(out.contains_edge(e));
            }
            let before = relation_counts(&g);
            let after = relation_counts(&out);
            for (rel, n) in before {
                prop_assert!(after.get(&rel).copied().unwrap_or(0) >= n);
            }
            prop_assert_eq!(out.node_count(), g.node_count());
            // Same input, same output.
            prop_assert_eq!(predict_links(&g, &matcher).0, out);
        }
    }

    #[test]
    fn expand_context_is_idempotent_and_grows(shape in raw_graph()) {
        let g = predict_links(&materialize(&shape), &LexicalMatcher::default()).0;
        let logs: Vec<String> = g.nodes_of_kind(NodeKind::TextLog).map(|n| n.id.clone()).collect();
        let mut rewritten: HashMap<String, String> = HashMap::new();
        for id in &logs {
            let once = expand_context(&g, id).unwrap();
            prop_assert!(once.chars().count() >= g.node(id).unwrap().text.chars().count());
            rewritten.insert(id.clone(), once);
        }
        let nodes: Vec<Node> = g
            .nodes()
            .map(|n| {
                let mut n = n.clone();
                if let Some(t) = rewritten.get(&n.id) {
                    n.text = t.clone();
                }
                n
            })
            .collect();
        let g2 = KnowledgeGraph::new(nodes, g.edges().to_vec()).unwrap().0;
        for id in &logs {
            prop_assert_eq!(&expand_context(&g2, id).unwrap(), &rewritten[id]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_plants_satisfy_graph_invariants(
        seed in any::<u64>(),
        n_fl in 1usize..30,
        branching in 1usize..5,
        n_logs in 0usize..120,
        abbreviation_rate in 0.0f64..=1.0,
        related_rate in 0.0f64..=1.0,
        related_recorded_rate in 0.0f64..=1.0,
        short_fraction in 0.0f64..=1.0,
        jargon_rate in 0.0f64..=1.0,
    ) {
        let cfg = PlantConfig {
            seed,
            n_fl,
            tree_branching: branching,
            n_logs,
            abbreviation_rate,
            related_rate,
            related_recorded_rate,
            short_fraction,
            jargon_rate,
            n_queries: 0,
            ..Default::default()
        };
        let p = generate_plant(&cfg).unwrap();
        assert_kg_invariants(&p.graph);
        let built = build_graph(&p.graph);
        assert_kg_invariants(&built);
        assert_filtered(&built);
        let enriched = predict_links(&p.graph, &LexicalMatcher::default()).0;
        assert_kg_invariants(&enriched);
        for n in p.graph.nodes() {
            prop_assert!(p.text_vectors.contains_key(&n.id));
        }
    }
}
