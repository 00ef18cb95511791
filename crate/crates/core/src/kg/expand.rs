use super::graph::{KnowledgeGraph, Node, NodeKind, Relation};
use super::links::CodeTable;
use crate::error::{Error, Result};
use crate::text;

/// Rewrites every occurrence of a linked FL code in the log text as
/// "<code> <description>". Occurrences already followed by the description
/// are left alone, so the operation is idempotent.
pub fn expand_context(graph: &KnowledgeGraph, log_id: &str) -> Result<String> {
    let log = graph
        .node(log_id)
        .ok_or_else(|| Error::UnknownNode(log_id.to_string()))?;
    if log.kind != NodeKind::TextLog {
        return Err(Error::NotATextLog(log_id.to_string()));
    }
    let linked: Vec<&Node> = graph
        .out_neighbors(log_id, Relation::ReportsAbout)
        .filter_map(|id| graph.node(id))
        .collect();
    Ok(expand_text(&log.text, &linked))
}

pub(crate) fn expand_text(source: &str, linked: &[&Node]) -> String {
    let spans = text::spans(source);
    let table = CodeTable::new(linked);
    let mut out = String::with_capacity(source.len());
    let mut copied = 0;
    let mut at = 0;
    while at < spans.len() {
        let Some((len, fl)) = table.longest_at(&spans, at) else {
            at += 1;
            continue;
        };
        at += len;
        let description = text::folded_tokens(&fl.text);
        if description.is_empty() {
            continue;
        }
        if text::matches_at(&spans, at, &description) {
            at += description.len();
            continue;
        }
        let insert_at = spans[at - 1].range.end;
        out.push_str(&source[copied..insert_at]);
        out.push(' ');
        out.push_str(fl.text.trim());
        copied = insert_at;
    }
    out.push_str(&source[copied..]);
    out
}
