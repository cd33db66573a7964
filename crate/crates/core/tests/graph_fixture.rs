mod common;

use std::time::Instant;

use repograph_core::kgraph::{self, EdgeType, NodeType};

#[test]
fn fixture_graph_matches_manifest() {
    let fx = common::fixture();
    let m = common::manifest();
    let g = kgraph::build_graph(&fx.snapshot()).unwrap();
    let stats = g.stats();
    for t in NodeType::ALL {
        let want = m["node_counts"][t.as_str()].as_u64().unwrap() as usize;
        assert_eq!(stats.nodes_of(*t), want, "node type {t}");
    }
    for t in EdgeType::ALL {
        let want = m["edge_counts"][t.as_str()].as_u64().unwrap() as usize;
        assert_eq!(stats.edges_of(*t), want, "edge type {t}");
    }
    assert_eq!(stats.total_nodes, m["total_nodes"].as_u64().unwrap() as usize);
    assert_eq!(stats.total_edges, m["total_edges"].as_u64().unwrap() as usize);
    let stubs = g
        .nodes()
        .iter()
        .filter(|n| n.attr("external").and_then(|v| v.as_bool()) == Some(true))
        .count();
    assert_eq!(stubs, m["external_function_stubs"].as_u64().unwrap() as usize);
    let components: Vec<&str> = g
        .nodes()
        .iter()
        .filter(|n| n.node_type == NodeType::Component)
        .map(|n| n.id.as_str())
        .collect();
    let want: Vec<&str> = m["components"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(components, want);
}

#[test]
fn graph_build_is_deterministic_and_fast() {
    let start = Instant::now();
    let fx = common::fixture();
    let snap = fx.snapshot();
    let a = kgraph::build_graph(&snap).unwrap();
    let dir = tempfile::tempdir().unwrap();
    kgraph::export_json(&a, &dir.path().join("g.json")).unwrap();
    kgraph::export_graphml(&a, &dir.path().join("g.graphml")).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let b = kgraph::build_graph(&snap).unwrap();
    assert_eq!(kgraph::graph_to_json(&a), kgraph::graph_to_json(&b));
}

#[test]
fn empty_snapshot_builds_empty_graph() {
    let snap = repograph_core::ingest::RepoSnapshot::empty("x");
    let g = kgraph::build_graph(&snap).unwrap();
    assert_eq!(g.node_count(), 0);
    assert_eq!(g.edge_count(), 0);
}

#[test]
fn schema_mismatch_is_rejected() {
    let mut snap = repograph_core::ingest::RepoSnapshot::empty("x");
    snap.schema_version = 99;
    assert!(matches!(
        kgraph::build_graph(&snap),
        Err(kgraph::GraphError::SchemaMismatch { .. })
    ));
}

#[test]
fn calls_resolve_locally_or_to_stubs() {
    let fx = common::fixture();
    let g = kgraph::build_graph(&fx.snapshot()).unwrap();
    let e = g
        .edge(
            "function:app/render.py::Renderer::render_line",
            "function:app/render.py::Renderer::_text",
            EdgeType::Calls,
        )
        .unwrap();
    assert_eq!(e.attrs["count"].as_i64(), Some(2));
    assert!(g
        .edge(
            "function:app/render.py::SafeRenderer::_text",
            "function:app/render.py::Renderer::_text",
            EdgeType::Calls
        )
        .is_some());
    assert!(g
        .edge(
            "function:app/routes.py::post_page",
            "function:external::render_markdown",
            EdgeType::Calls
        )
        .is_some());
    let f = g.node("function:app/config.py::load_config").unwrap();
    assert_eq!(f.attrs["complexity"].as_i64(), Some(6));
    assert!(f.attr_str("docstring").unwrap().starts_with("Read key=value"));
}
