//! Link enrichment: restoring `reports_about` and `related_to` edges that the
//! source records left implicit.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::graph::{check_edge, Edge, KnowledgeGraph, Node, NodeKind, Relation};
use crate::text::{self, Span};

/// Pluggable producer of candidate edges.
///
/// Implementations must be deterministic. Proposals that violate edge type
/// constraints are rejected by [`predict_links`], never inserted.
pub trait LinkMatcher {
    /// Proposes `reports_about` edges from `log` to any of `candidates`.
    fn reports_about(&self, log: &Node, candidates: &[&Node]) -> Vec<Edge>;

    /// Proposes `related_to` edges between text logs of `graph`.
    fn related_to(&self, graph: &KnowledgeGraph) -> Vec<Edge>;
}

/// Lexical stand-in for learned entity and record linking.
///
/// `reports_about`: case-insensitive token match of an FL code in the log
/// text. Overlapping matches resolve to the longest code, then to the
/// smallest FL id.
///
/// `related_to`: logs reporting about the same FL whose timestamps are at
/// most `window_secs` apart are chained earlier -> later. Logs without a
/// timestamp never participate.
#[derive(Debug, Clone)]
pub struct LexicalMatcher {
    pub window_secs: i64,
}

impl Default for LexicalMatcher {
    fn default() -> Self {
        LexicalMatcher {
            window_secs: 48 * 3600,
        }
    }
}

/// Matcher that never proposes anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopMatcher;

impl LinkMatcher for NoopMatcher {
    fn reports_about(&self, _: &Node, _: &[&Node]) -> Vec<Edge> {
        Vec::new()
    }

    fn related_to(&self, _: &KnowledgeGraph) -> Vec<Edge> {
        Vec::new()
    }
}

/// FL codes tokenized for matching, longest first then by id.
pub(crate) struct CodeTable<'a> {
    codes: Vec<(Vec<String>, &'a Node)>,
}

impl<'a> CodeTable<'a> {
    pub fn new(fls: &[&'a Node]) -> Self {
        let mut codes: Vec<(Vec<String>, &Node)> = fls
            .iter()
            .filter_map(|fl| fl.code.as_deref().map(|c| (text::folded_tokens(c), *fl)))
            .filter(|(toks, _)| !toks.is_empty())
            .collect();
        codes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.1.id.cmp(&b.1.id)));
        CodeTable { codes }
    }

    /// Longest code starting at token `at`, as (token count, FL).
    pub fn longest_at(&self, spans: &[Span], at: usize) -> Option<(usize, &'a Node)> {
        self.codes
            .iter()
            .find(|(toks, _)| text::matches_at(spans, at, toks))
            .map(|(toks, fl)| (toks.len(), *fl))
    }
}

impl LinkMatcher for LexicalMatcher {
    fn reports_about(&self, log: &Node, candidates: &[&Node]) -> Vec<Edge> {
        let spans = text::spans(&log.text);
        let table = CodeTable::new(candidates);
        let mut targets = BTreeSet::new();
        let mut at = 0;
        while at < spans.len() {
            match table.longest_at(&spans, at) {
                Some((len, fl)) => {
                    targets.insert(fl.id.as_str());
                    at += len;
                }
                None => at += 1,
            }
        }
        targets
            .into_iter()
            .map(|fl| Edge::new(&log.id, Relation::ReportsAbout, fl))
            .collect()
    }

    fn related_to(&self, graph: &KnowledgeGraph) -> Vec<Edge> {
        let mut proposals = BTreeSet::new();
        for fl in graph.nodes_of_kind(NodeKind::FunctionalLocation) {
            let mut logs: Vec<(i64, &str)> = graph
                .in_neighbors(&fl.id, Relation::ReportsAbout)
                .filter_map(|id| graph.node(id).and_then(|n| n.ts.map(|ts| (ts, id))))
                .collect();
            logs.sort_unstable();
            logs.dedup();
            for pair in logs.windows(2) {
                let ((t0, a), (t1, b)) = (pair[0], pair[1]);
                if t1 - t0 <= self.window_secs {
                    proposals.insert(Edge::new(a, Relation::RelatedTo, b));
                }
            }
        }
        proposals.into_iter().collect()
    }
}

/// What [`predict_links`] did.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinkReport {
    pub added: BTreeMap<Relation, usize>,
    pub rejected: Vec<RejectedEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedEdge {
    pub edge: Edge,
    pub reason: String,
}

/// Returns a superset of `graph`: original edges kept, valid proposals added
/// once. `reports_about` links are restored first so record linking sees them.
pub fn predict_links(graph: &KnowledgeGraph, matcher: &dyn LinkMatcher) -> (KnowledgeGraph, LinkReport) {
    let mut report = LinkReport {
        added: Relation::ALL.iter().map(|&r| (r, 0)).collect(),
        rejected: Vec::new(),
    };

    let fls: Vec<&Node> = graph.nodes_of_kind(NodeKind::FunctionalLocation).collect();
    let mut proposals = Vec::new();
    for log in graph.nodes_of_kind(NodeKind::TextLog) {
        proposals.extend(matcher.reports_about(log, &fls));
    }
    let first = merge(graph.clone(), proposals, Relation::ReportsAbout, &mut report);
    let proposals = matcher.related_to(&first);
    let out = merge(first, proposals, Relation::RelatedTo, &mut report);
    (out, report)
}

fn merge(graph: KnowledgeGraph, proposals: Vec<Edge>, channel: Relation, report: &mut LinkReport) -> KnowledgeGraph {
    let (nodes, mut edges) = graph.into_parts();
    let mut present: BTreeSet<Edge> = edges.iter().cloned().collect();
    for edge in proposals {
        if edge.rel != channel {
            report.rejected.push(RejectedEdge {
                reason: format!("{} proposed where {channel} was requested", edge.rel),
                edge,
            });
            continue;
        }
        if let Err(e) = check_edge(&nodes, &edge) {
            report.rejected.push(RejectedEdge {
                edge,
                reason: e.to_string(),
            });
            continue;
        }
        let reverse = Edge::new(&edge.dst, edge.rel, &edge.src);
        if edge.rel == Relation::RelatedTo && present.contains(&reverse) {
            continue;
        }
        if present.insert(edge.clone()) {
            *report.added.entry(edge.rel).or_default() += 1;
            edges.push(edge);
        }
    }
    KnowledgeGraph::from_checked_parts(nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(nodes: Vec<Node>, edges: Vec<Edge>) -> KnowledgeGraph {
        KnowledgeGraph::new(nodes, edges).unwrap().0
    }

    #[test]
    fn abbreviation_creates_reports_about() {
        let g = graph(
            vec![
                Node::text_log("t1", "A11 läuft heiß"),
                Node::functional_location("f1", "A11", "Pumpe"),
                Node::functional_location("f2", "B7", "Kühler"),
            ],
            vec![],
        );
        let (out, report) = predict_links(&g, &LexicalMatcher::default());
        assert!(out.contains_edge(&Edge::new("t1", Relation::ReportsAbout, "f1")));
        assert_eq!(out.edge_count(), 1);
        assert_eq!(report.added[&Relation::ReportsAbout], 1);
    }

    #[test]
    fn match_is_token_based_and_case_insensitive() {
        let m = LexicalMatcher::default();
        let fl = Node::functional_location("f1", "A11", "Pumpe");
        let hit = m.reports_about(&Node::text_log("t", "pumpe a11: undicht"), &[&fl]);
        assert_eq!(hit.len(), 1);
        let miss = m.reports_about(&Node::text_log("t", "A111 undicht"), &[&fl]);
        assert!(miss.is_empty());
    }

    #[test]
    fn longest_code_wins_on_overlap() {
        let short = Node::functional_location("f1", "FL 1", "Anlage");
        let long = Node::functional_location("f2", "FL 1 2", "Pumpe");
        let m = LexicalMatcher::default();
        let got = m.reports_about(&Node::text_log("t", "Störung FL 1 2 heute"), &[&short, &long]);
        assert_eq!(got, vec![Edge::new("t", Relation::ReportsAbout, "f2")]);
    }

    #[test]
    fn noop_matcher_is_identity() {
        let g = graph(
            vec![
                Node::text_log("t1", "A11 läuft heiß"),
                Node::functional_location("f1", "A11", "Pumpe"),
            ],
            vec![],
        );
        let (out, report) = predict_links(&g, &NoopMatcher);
        assert_eq!(out, g);
        assert!(report.rejected.is_empty());
    }

    #[test]
    fn shared_fl_within_window_links_earlier_to_later() {
        let g = graph(
            vec![
                Node::text_log("late", "Dichtung gewechselt").with_ts(10_000),
                Node::text_log("early", "Pumpe undicht").with_ts(4_000),
                Node::text_log("far", "Pumpe undicht").with_ts(10_000_000),
                Node::functional_location("f1", "A11", "Pumpe"),
            ],
            vec![
                Edge::new("late", Relation::ReportsAbout, "f1"),
                Edge::new("early", Relation::ReportsAbout, "f1"),
                Edge::new("far", Relation::ReportsAbout, "f1"),
            ],
        );
        let (out, report) = predict_links(&g, &LexicalMatcher::default());
        let related: Vec<_> = out.edges().iter().filter(|e| e.rel == Relation::RelatedTo).collect();
        assert_eq!(related, vec![&Edge::new("early", Relation::RelatedTo, "late")]);
        assert_eq!(report.added[&Relation::RelatedTo], 1);
    }

    #[test]
    fn missing_timestamps_disable_record_linking() {
        let g = graph(
            vec![
                Node::text_log("a", "x"),
                Node::text_log("b", "y").with_ts(1),
                Node::functional_location("f1", "A11", "Pumpe"),
            ],
            vec![
                Edge::new("a", Relation::ReportsAbout, "f1"),
                Edge::new("b", Relation::ReportsAbout, "f1"),
            ],
        );
        assert!(LexicalMatcher::default().related_to(&g).is_empty());
    }

    struct Bad;
    impl LinkMatcher for Bad {
        fn reports_about(&self, log: &Node, _: &[&Node]) -> Vec<Edge> {
            vec![Edge::new(&log.id, Relation::ReportsAbout, &log.id)]
        }
        fn related_to(&self, g: &KnowledgeGraph) -> Vec<Edge> {
            g.nodes_of_kind(NodeKind::FunctionalLocation)
                .map(|f| Edge::new("t1", Relation::RelatedTo, &f.id))
                .collect()
        }
    }

    #[test]
    fn type_invalid_proposals_are_rejected_and_reported() {
        let g = graph(
            vec![
                Node::text_log("t1", "x"),
                Node::functional_location("f1", "A11", "Pumpe"),
            ],
            vec![],
        );
        let (out, report) = predict_links(&g, &Bad);
        assert_eq!(out.edge_count(), 0);
        assert_eq!(report.rejected.len(), 2);
    }
}
