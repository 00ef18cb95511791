use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    TextLog,
    FunctionalLocation,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::TextLog => "text_log",
            NodeKind::FunctionalLocation => "functional_location",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    RelatedTo,
    ReportsAbout,
    PartOf,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::RelatedTo, Relation::ReportsAbout, Relation::PartOf];

    /// Required (source, target) node kinds.
    pub fn endpoint_kinds(self) -> (NodeKind, NodeKind) {
        match self {
            Relation::RelatedTo => (NodeKind::TextLog, NodeKind::TextLog),
            Relation::ReportsAbout => (NodeKind::TextLog, NodeKind::FunctionalLocation),
            Relation::PartOf => (NodeKind::FunctionalLocation, NodeKind::FunctionalLocation),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Relation::RelatedTo => 0,
            Relation::ReportsAbout => 1,
            Relation::PartOf => 2,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::RelatedTo => "related_to",
            Relation::ReportsAbout => "reports_about",
            Relation::PartOf => "part_of",
        })
    }
}

/// A text log or a functional location. Unknown JSON fields are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<i64>,
}

impl Node {
    pub fn text_log(id: impl Into<String>, text: impl Into<String>) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::TextLog,
            text: text.into(),
            code: None,
            ts: None,
        }
    }

    pub fn functional_location(
        id: impl Into<String>,
        code: impl Into<String>,
        description: impl Into<String>,
    ) -> Self {
        Node {
            id: id.into(),
            kind: NodeKind::FunctionalLocation,
            text: description.into(),
            code: Some(code.into()),
            ts: None,
        }
    }

    pub fn with_ts(mut self, ts: i64) -> Self {
        self.ts = Some(ts);
        self
    }

    fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidNode {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        match self.kind {
            NodeKind::TextLog if self.text.trim().is_empty() => Err(invalid("text log without text")),
            NodeKind::FunctionalLocation
                if self.code.as_deref().is_none_or(|c| c.trim().is_empty()) =>
            {
                Err(invalid("functional location without code"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub rel: Relation,
}

impl Edge {
    pub fn new(src: impl Into<String>, rel: Relation, dst: impl Into<String>) -> Self {
        Edge {
            src: src.into(),
            dst: dst.into(),
            rel,
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -[{}]-> {}", self.src, self.rel, self.dst)
    }
}

/// Validated heterogeneous plant graph. Immutable once built; every
/// operation returns a new graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, Node>,
    edges: Vec<Edge>,
    out: HashMap<String, Vec<usize>>,
    incoming: HashMap<String, Vec<usize>>,
}

impl KnowledgeGraph {
    /// Builds and validates a graph. Duplicate edges are dropped; the number
    /// dropped is returned alongside.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<(Self, usize)> {
        let mut map = BTreeMap::new();
        for node in nodes {
            node.validate()?;
            if map.contains_key(&node.id) {
                return Err(Error::DuplicateNode(node.id));
            }
            map.insert(node.id.clone(), node);
        }
        let mut seen = BTreeSet::new();
        let mut kept = Vec::with_capacity(edges.len());
        let mut duplicates = 0;
        for edge in edges {
            check_edge(&map, &edge)?;
            if seen.insert(edge.clone()) {
                kept.push(edge);
            } else {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            log::warn!("dropped {duplicates} duplicate edges");
        }
        let graph = Self::assemble(map, kept);
        graph.check_part_of_forest()?;
        Ok((graph, duplicates))
    }

    fn assemble(nodes: BTreeMap<String, Node>, edges: Vec<Edge>) -> Self {
        let mut out: HashMap<String, Vec<usize>> = HashMap::new();
        let mut incoming: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            out.entry(e.src.clone()).or_default().push(i);
            incoming.entry(e.dst.clone()).or_default().push(i);
        }
        KnowledgeGraph {
            nodes,
            edges,
            out,
            incoming,
        }
    }

    fn check_part_of_forest(&self) -> Result<()> {
        let mut parent: HashMap<&str, &str> = HashMap::new();
        for e in self.edges.iter().filter(|e| e.rel == Relation::PartOf) {
            if parent.insert(&e.src, &e.dst).is_some() {
                return Err(Error::PartOfNotForest(e.src.clone()));
            }
        }
        // With at most one parent per node, a cycle is a parent chain that
        // revisits a node.
        let mut done: BTreeSet<&str> = BTreeSet::new();
        for &start in parent.keys() {
            let mut path = BTreeSet::new();
            let mut cur = start;
            while let Some(&next) = parent.get(cur) {
                if done.contains(cur) {
                    break;
                }
                if !path.insert(cur) {
                    return Err(Error::PartOfNotForest(cur.to_string()));
                }
                cur = next;
            }
            done.extend(path);
        }
        Ok(())
    }

    /// Same node set with a different edge list, validated.
    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self> {
        let (g, _) = Self::new(self.nodes.values().cloned().collect(), edges)?;
        Ok(g)
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains_edge(&self, edge: &Edge) -> bool {
        self.out
            .get(&edge.src)
            .is_some_and(|ix| ix.iter().any(|&i| &self.edges[i] == edge))
    }

    pub fn edge_count_by_relation(&self) -> BTreeMap<Relation, usize> {
        let mut counts: BTreeMap<Relation, usize> = Relation::ALL.iter().map(|&r| (r, 0)).collect();
        for e in &self.edges {
            *counts.entry(e.rel).or_default() += 1;
        }
        counts
    }

    /// Targets of outgoing edges of relation `rel`, in edge order.
    pub fn out_neighbors<'a>(&'a self, id: &str, rel: Relation) -> impl Iterator<Item = &'a str> + 'a {
        self.out
            .get(id)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
            .filter(move |e| e.rel == rel)
            .map(|e| e.dst.as_str())
    }

    pub fn in_neighbors<'a>(&'a self, id: &str, rel: Relation) -> impl Iterator<Item = &'a str> + 'a {
        self.incoming
            .get(id)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
            .filter(move |e| e.rel == rel)
            .map(|e| e.src.as_str())
    }

    pub(crate) fn into_parts(self) -> (BTreeMap<String, Node>, Vec<Edge>) {
        (self.nodes, self.edges)
    }

    pub(crate) fn from_checked_parts(nodes: BTreeMap<String, Node>, edges: Vec<Edge>) -> Self {
        Self::assemble(nodes, edges)
    }
}

pub(crate) fn check_edge(nodes: &BTreeMap<String, Node>, edge: &Edge) -> Result<()> {
    let lookup = |id: &str| {
        nodes.get(id).ok_or_else(|| Error::DanglingEndpoint {
            src: edge.src.clone(),
            dst: edge.dst.clone(),
            rel: edge.rel,
            missing: id.to_string(),
        })
    };
    let src = lookup(&edge.src)?;
    let dst = lookup(&edge.dst)?;
    if edge.src == edge.dst {
        return Err(Error::SelfLoop(edge.src.clone()));
    }
    let (want_src, want_dst) = edge.rel.endpoint_kinds();
    if src.kind != want_src || dst.kind != want_dst {
        return Err(Error::RelationKindMismatch {
            src: edge.src.clone(),
            dst: edge.dst.clone(),
            rel: edge.rel,
            src_kind: src.kind,
            dst_kind: dst.kind,
        });
    }
    Ok(())
}

/// Keeps every functional location and only the text logs with at least one
/// outgoing `reports_about` edge; edges touching dropped logs go with them.
pub fn build_graph(raw: &KnowledgeGraph) -> KnowledgeGraph {
    let keep = |n: &Node| {
        n.kind == NodeKind::FunctionalLocation
            || raw.out_neighbors(&n.id, Relation::ReportsAbout).next().is_some()
    };
    let nodes: BTreeMap<String, Node> = raw
        .nodes
        .values()
        .filter(|n| keep(n))
        .map(|n| (n.id.clone(), n.clone()))
        .collect();
    let edges = raw
        .edges
        .iter()
        .filter(|e| nodes.contains_key(&e.src) && nodes.contains_key(&e.dst))
        .cloned()
        .collect();
    KnowledgeGraph::assemble(nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fl(id: &str) -> Node {
        Node::functional_location(id, id.to_uppercase(), "desc")
    }

    #[test]
    fn minimal_part_of_graph() {
        let (g, dups) = KnowledgeGraph::new(
            vec![fl("a"), fl("b")],
            vec![Edge::new("a", Relation::PartOf, "b")],
        )
        .unwrap();
        assert_eq!((g.node_count(), g.edge_count(), dups), (2, 1, 0));
    }

    #[test]
    fn reports_about_from_fl_is_a_kind_mismatch() {
        let err = KnowledgeGraph::new(
            vec![fl("a"), fl("b")],
            vec![Edge::new("a", Relation::ReportsAbout, "b")],
        )
        .unwrap_err();
        assert!(err.to_string().contains("relation/kind mismatch"), "{err}");
    }

    #[test]
    fn dangling_and_self_loop_rejected() {
        let err = KnowledgeGraph::new(vec![fl("a")], vec![Edge::new("a", Relation::PartOf, "zz")]).unwrap_err();
        assert!(matches!(err, Error::DanglingEndpoint { ref missing, .. } if missing == "zz"));
        let err = KnowledgeGraph::new(vec![fl("a")], vec![Edge::new("a", Relation::PartOf, "a")]).unwrap_err();
        assert!(matches!(err, Error::SelfLoop(_)));
    }

    #[test]
    fn duplicates_are_counted_and_dropped() {
        let e = Edge::new("a", Relation::PartOf, "b");
        let (g, dups) = KnowledgeGraph::new(vec![fl("a"), fl("b")], vec![e.clone(), e]).unwrap();
        assert_eq!((g.edge_count(), dups), (1, 1));
    }

    #[test]
    fn part_of_cycle_rejected() {
        let err = KnowledgeGraph::new(
            vec![fl("a"), fl("b"), fl("c")],
            vec![
                Edge::new("a", Relation::PartOf, "b"),
                Edge::new("b", Relation::PartOf, "c"),
                Edge::new("c", Relation::PartOf, "a"),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::PartOfNotForest(_)));
    }

    #[test]
    fn invalid_nodes_rejected() {
        let mut n = fl("a");
        n.code = None;
        assert!(KnowledgeGraph::new(vec![n], vec![]).is_err());
        assert!(KnowledgeGraph::new(vec![Node::text_log("t", "  ")], vec![]).is_err());
        assert!(matches!(
            KnowledgeGraph::new(vec![fl("a"), fl("a")], vec![]).unwrap_err(),
            Error::DuplicateNode(_)
        ));
    }

    #[test]
    fn build_drops_unlinked_logs_and_their_edges() {
        let (raw, _) = KnowledgeGraph::new(
            vec![
                fl("f1"),
                fl("f2"),
                Node::text_log("t1", "one"),
                Node::text_log("t2", "two"),
                Node::text_log("t3", "three"),
            ],
            vec![
                Edge::new("t1", Relation::ReportsAbout, "f1"),
                Edge::new("t2", Relation::ReportsAbout, "f2"),
                Edge::new("t1", Relation::RelatedTo, "t3"),
                Edge::new("f1", Relation::PartOf, "f2"),
            ],
        )
        .unwrap();
        let g = build_graph(&raw);
        assert_eq!(g.node_count(), 4);
        assert!(g.node("t3").is_none());
        assert_eq!(g.edge_count(), 3);
        assert!(g.edges().iter().all(|e| e.rel != Relation::RelatedTo));
    }

    #[test]
    fn build_on_fl_only_graph_is_identity() {
        let (raw, _) = KnowledgeGraph::new(
            vec![fl("a"), fl("b")],
            vec![Edge::new("a", Relation::PartOf, "b")],
        )
        .unwrap();
        assert_eq!(build_graph(&raw), raw);
    }
}
