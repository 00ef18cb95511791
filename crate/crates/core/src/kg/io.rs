use std::path::Path;

use super::graph::{Edge, KnowledgeGraph, Node};
use crate::error::Result;
use crate::jsonl;

/// Loads an unfiltered graph from node and edge JSON-lines files.
pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<KnowledgeGraph> {
    let nodes: Vec<Node> = jsonl::read(nodes_path)?;
    let edges: Vec<Edge> = jsonl::read(edges_path)?;
    let (graph, duplicates) = KnowledgeGraph::new(nodes, edges)?;
    if duplicates > 0 {
        log::warn!("{}: {duplicates} duplicate edges ignored", edges_path.display());
    }
    Ok(graph)
}

pub fn save_graph(graph: &KnowledgeGraph, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    jsonl::write(nodes_path, graph.nodes())?;
    jsonl::write(edges_path, graph.edges())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use std::fs;

    const NODES: &str = r#"{"id":"tl1","kind":"text_log","text":"A11 läuft heiß","ts":100}
{"id":"tl2","kind":"text_log","text":"Lömi Leitung undicht","extra":"ignored"}
{"id":"fl1","kind":"functional_location","text":"Pumpe","code":"A11"}
{"id":"fl2","kind":"functional_location","text":"Anlage","code":"A1"}

{"id":"fl3","kind":"functional_location","text":"Reaktor","code":"R2"}
"#;
    const EDGES: &str = r#"{"src":"tl1","dst":"fl1","rel":"reports_about"}
{"src":"tl2","dst":"fl3","rel":"reports_about"}
{"src":"fl1","dst":"fl2","rel":"part_of"}
{"src":"fl3","dst":"fl2","rel":"part_of"}
{"src":"fl3","dst":"fl2","rel":"part_of"}
"#;

    #[test]
    fn fixture_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (n, e) = (dir.path().join("n.jsonl"), dir.path().join("e.jsonl"));
        fs::write(&n, NODES).unwrap();
        fs::write(&e, EDGES).unwrap();
        let g = load_graph(&n, &e).unwrap();
        // 2 TLs + 3 FLs; 5 edge lines with one duplicate.
        assert_eq!((g.node_count(), g.edge_count()), (5, 4));
        assert_eq!(g.node("tl1").unwrap().ts, Some(100));

        let (n2, e2) = (dir.path().join("n2.jsonl"), dir.path().join("e2.jsonl"));
        save_graph(&g, &n2, &e2).unwrap();
        assert_eq!(load_graph(&n2, &e2).unwrap(), g);
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let (n, e) = (dir.path().join("n.jsonl"), dir.path().join("e.jsonl"));
        fs::write(&n, NODES).unwrap();
        fs::write(&e, "{\"src\":\"tl1\",\"dst\":\"fl1\",\"rel\":\"reports_about\"}\n{\"src\":\"tl1\",\"rel\":\"bogus\"}\n").unwrap();
        match load_graph(&n, &e).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }
}
