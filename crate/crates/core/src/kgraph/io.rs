use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::util::write_atomic;

use super::{Edge, GraphError, KnowledgeGraph, Node, Provenance, GRAPH_SCHEMA_VERSION};

#[derive(Serialize, Deserialize)]
struct GraphFile {
    schema_version: u32,
    provenance: Provenance,
    #[serde(default)]
    version: u64,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Canonical JSON text of a graph (nodes by id, edges by (src, dst, type)).
pub fn graph_to_json(graph: &KnowledgeGraph) -> String {
    let file = GraphFile {
        schema_version: graph.schema_version,
        provenance: graph.provenance.clone(),
        version: graph.version,
        nodes: graph.nodes().to_vec(),
        edges: graph.edges().to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("graph serialises");
    s.push('\n');
    s
}

pub fn graph_from_json(text: &str) -> Result<KnowledgeGraph, GraphError> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::MalformedGraphFile {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.schema_version != GRAPH_SCHEMA_VERSION {
        return Err(GraphError::SchemaMismatch {
            found: file.schema_version,
            supported: GRAPH_SCHEMA_VERSION,
        });
    }
    KnowledgeGraph::from_parts(file.provenance, file.version, file.nodes, file.edges)
}

pub fn export_json(graph: &KnowledgeGraph, path: &Path) -> Result<(), GraphError> {
    write_atomic(path, graph_to_json(graph).as_bytes())?;
    Ok(())
}

pub fn import_json(path: &Path) -> Result<KnowledgeGraph, GraphError> {
    graph_from_json(&std::fs::read_to_string(path)?)
}

fn escape(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\t' | '\n' | '\r' => {
                let _ = write!(out, "&#{};", c as u32);
            }
            // not representable in XML 1.0, even as a character reference
            c if (c as u32) < 0x20 || c == '\u{FFFE}' || c == '\u{FFFF}' => out.push('\u{FFFD}'),
            c => out.push(c),
        }
    }
}

fn data(out: &mut String, key: &str, value: &str) {
    let _ = write!(out, "<data key=\"{key}\">");
    escape(value, out);
    out.push_str("</data>");
}

/// GraphML document text. Node attributes are packed into one JSON string
/// under `d_attrs`; edge attributes likewise under `e_attrs`.
pub fn write_graphml(graph: &KnowledgeGraph) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n");
    for (id, domain, name) in [
        ("d_type", "node", "type"),
        ("d_label", "node", "label"),
        ("d_attrs", "node", "attrs"),
        ("e_type", "edge", "type"),
        ("e_attrs", "edge", "attrs"),
    ] {
        let _ = writeln!(
            out,
            "  <key id=\"{id}\" for=\"{domain}\" attr.name=\"{name}\" attr.type=\"string\"/>"
        );
    }
    out.push_str("  <graph id=\"G\" edgedefault=\"directed\">\n");
    for n in graph.nodes() {
        out.push_str("    <node id=\"");
        escape(&n.id, &mut out);
        out.push_str("\">");
        data(&mut out, "d_type", n.node_type.as_str());
        data(&mut out, "d_label", &n.label);
        data(
            &mut out,
            "d_attrs",
            &serde_json::to_string(&n.attrs).expect("attrs serialise"),
        );
        out.push_str("</node>\n");
    }
    for (i, e) in graph.edges().iter().enumerate() {
        let _ = write!(out, "    <edge id=\"e{i}\" source=\"");
        escape(&e.src, &mut out);
        out.push_str("\" target=\"");
        escape(&e.dst, &mut out);
        out.push_str("\">");
        data(&mut out, "e_type", e.edge_type.as_str());
        data(
            &mut out,
            "e_attrs",
            &serde_json::to_string(&e.attrs).expect("attrs serialise"),
        );
        out.push_str("</edge>\n");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

pub fn export_graphml(graph: &KnowledgeGraph, path: &Path) -> Result<(), GraphError> {
    write_atomic(path, write_graphml(graph).as_bytes())?;
    Ok(())
}
