mod common;

use common::scenario::Scenario;
use repograph_core::ingest::{self, RepoSnapshot};
use repograph_core::kgraph::{self, DeltaReport, KnowledgeGraph, NodeType};

fn step(prev: &KnowledgeGraph, snap: &RepoSnapshot) -> (KnowledgeGraph, DeltaReport) {
    let (next, report) = kgraph::apply_delta(prev, snap).unwrap();
    let rebuilt = kgraph::build_graph(snap).unwrap();
    assert!(
        next.structurally_equal(&rebuilt),
        "delta result differs from rebuild: {:?}",
        DeltaReport::between(&rebuilt, &next, vec![])
    );
    assert_eq!(next.stats(), rebuilt.stats());
    assert_eq!(next.version, prev.version + 1);
    next.check_integrity().unwrap();
    (next, report)
}

fn owned_by(g: &KnowledgeGraph, id: &str, path: &str) -> bool {
    g.node(id)
        .map(|n| n.attr_str("file") == Some(path) || n.node_type == NodeType::Commit)
        .unwrap_or(false)
}

#[test]
fn unchanged_snapshot_gives_empty_delta() {
    let sc = Scenario::new();
    let snap = sc.snapshot();
    let g = kgraph::build_graph(&snap).unwrap();
    let (next, report) = step(&g, &snap);
    assert!(report.is_empty(), "{report:?}");
    assert_eq!(next.version, 1);
}

#[test]
fn five_mutations_match_full_rebuild() {
    let mut sc = Scenario::new();
    let mut g = kgraph::build_graph(&sc.snapshot()).unwrap();

    // 1. edit one file
    let sha = sc.mutate(1);
    let (next, report) = step(&g, &sc.snapshot());
    assert_eq!(report.changed_files, vec!["app/utils.py"]);
    for id in report.added_nodes.iter().chain(&report.removed_nodes) {
        let in_old = owned_by(&g, id, "app/utils.py");
        let in_new = owned_by(&next, id, "app/utils.py");
        let stub = id.starts_with("function:external::");
        assert!(in_old || in_new || stub, "unexpected node change {id}");
    }
    assert!(report.added_nodes.contains(&format!("commit:{sha}")));
    g = next;

    // 2. delete a file
    let sha = sc.mutate(2);
    let (next, report) = step(&g, &sc.snapshot());
    assert!(next.node("file:app/__init__.py").is_none());
    assert!(next
        .edges()
        .iter()
        .all(|e| !e.src.contains("app/__init__.py") && !e.dst.contains("app/__init__.py")));
    let commit = next.node(&format!("commit:{sha}")).unwrap();
    assert_eq!(commit.attr_str("deleted_paths"), Some("app/__init__.py"));
    assert!(report.removed_nodes.contains(&"file:app/__init__.py".to_string()));
    g = next;

    // 3. add a file
    sc.mutate(3);
    let (next, report) = step(&g, &sc.snapshot());
    assert!(report.added_nodes.contains(&"function:app/cli.py::main".to_string()));
    g = next;

    // 4. rename a file
    let sha = sc.mutate(4);
    let snap = sc.snapshot();
    let c = snap.commits.iter().find(|c| c.sha == sha).unwrap();
    assert!(c
        .changed_files
        .iter()
        .any(|f| f.path == "app/markdown.py" && f.change_kind == ingest::ChangeKind::Renamed));
    let (next, report) = step(&g, &snap);
    assert!(report.changed_files.contains(&"app/render.py".to_string()));
    assert!(report.changed_files.contains(&"app/markdown.py".to_string()));
    g = next;

    // 5. new commit plus a pull request state change
    sc.mutate(5);
    let (next, report) = step(&g, &sc.snapshot());
    assert!(report.updated_nodes.contains(&"pr:#2".to_string()));
    assert!(report.added_nodes.contains(&"pr:#3".to_string()));
    assert_eq!(next.node("pr:#2").unwrap().attr_str("state"), Some("closed"));
    assert_eq!(next.version, 5);
}

#[test]
fn provenance_mismatch_is_rejected() {
    let sc = Scenario::new();
    let snap = sc.snapshot();
    let g = kgraph::build_graph(&snap).unwrap();
    let mut other = snap.clone();
    other.repo_id = "elsewhere".into();
    assert!(matches!(
        kgraph::apply_delta(&g, &other),
        Err(kgraph::GraphError::ProvenanceMismatch { .. })
    ));
}
