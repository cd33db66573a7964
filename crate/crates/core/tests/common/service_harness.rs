use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

use repograph_core::embed::{self, WalkConfig};
use repograph_core::featurize::{self, HashedSubwordEncoder};
use repograph_core::kblam::{KblamConfig, KblamModel};
use repograph_core::kgraph::{self, KnowledgeGraph};
use repograph_core::service::{app, load_engines, AppState, ServiceConfig};

pub struct Harness {
    _fixture: super::Fixture,
    pub dir: TempDir,
    pub config: ServiceConfig,
    pub graph: KnowledgeGraph,
}

impl Harness {
    pub fn new(with_index: bool) -> Self {
        let fixture = super::fixture();
        let dir = tempfile::tempdir().unwrap();
        let graph = kgraph::build_graph(&fixture.snapshot()).unwrap();
        kgraph::export_json(&graph, &dir.path().join("graph.json")).unwrap();
        if with_index {
            let feats = featurize::featurize_nodes(&graph, &HashedSubwordEncoder::default()).unwrap();
            let idx = embed::build_embeddings(&graph, &feats, &WalkConfig { epochs: 1, walks_per_node: 2, ..Default::default() }).unwrap();
            idx.save(&dir.path().join("index")).unwrap();
        }
        let toml = format!(
            r#"
[ingest]
repo = "{repo}"
pr_source = "{prs}"
repo_id = "fixture"

[router]
timeout_s = 2.0

[engines]
graph = "graph.json"
{index}

[server]
memory = "memory.jsonl"
subgraph_limit = 500
"#,
            repo = fixture.repo.display(),
            prs = fixture.prs.display(),
            index = if with_index { "index = \"index\"" } else { "" },
        );
        let path = dir.path().join("repograph.toml");
        std::fs::write(&path, toml).unwrap();
        let config = ServiceConfig::load(&path).unwrap();
        Harness { _fixture: fixture, dir, config, graph }
    }

    /// Adds an initialised (untrained) KBLam checkpoint to the engines.
    pub fn with_kblam(mut self) -> Self {
        let path = self.dir.path().join("kblam.ckpt");
        let model = KblamModel::init(KblamConfig { seed: 3, ..Default::default() }).unwrap();
        model.to_checkpoint().save(&path).unwrap();
        self.config.engines.kblam = Some(path);
        self
    }

    pub fn memory_path(&self) -> PathBuf {
        self.dir.path().join("memory.jsonl")
    }

    pub fn start(&self) -> (Arc<AppState>, Router) {
        let engines = load_engines(&self.config.engines).unwrap();
        let state = AppState::new(self.config.clone(), engines).unwrap();
        (state.clone(), app(state))
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), 1 << 26).await.unwrap();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

pub fn encode(s: &str) -> String {
    s.replace('#', "%23").replace(':', "%3A").replace('/', "%2F")
}

pub fn ids(v: &Value) -> BTreeSet<String> {
    v["nodes"].as_array().unwrap().iter().map(|n| n["id"].as_str().unwrap().to_string()).collect()
}
