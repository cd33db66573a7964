//! HTTP service, configuration and episodic memory.

mod config;
mod http;
mod memory;

pub use config::{EnginesSection, IngestSection, ServerSection, ServiceConfig};
pub use http::{app, serve, AppState, JobState, JobStatus, QueryRequest};
pub use memory::{
    AnswerSummary, DecisionSummary, EpisodicRecord, Feedback, MemoryError, MemoryFilter, MemoryStore, Rating,
    MEMORY_SCHEMA_VERSION,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::deepgraph::{DeepGraphEngine, SageModel};
use crate::embed::EmbeddingIndex;
use crate::featurize::{self, HashedSubwordEncoder, HttpEncoder, NodeFeatureMatrix, TextEncoder};
use crate::kblam::KblamModel;
use crate::kgraph::{self, KnowledgeGraph};
use crate::numkernel::Checkpoint;
use crate::router::Engines;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("artifact missing: {kind} at {path}")]
    ArtifactMissing { kind: String, path: PathBuf },
    #[error("artifact {path} could not be loaded: {message}")]
    ArtifactInvalid { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn require(kind: &str, path: &Path) -> Result<(), ServiceError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ServiceError::ArtifactMissing { kind: kind.into(), path: path.to_path_buf() })
    }
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::ArtifactInvalid { path: path.to_path_buf(), message: e.to_string() }
}

pub fn make_encoder(url: Option<&str>) -> Result<Arc<dyn TextEncoder>, ServiceError> {
    match url {
        None => Ok(Arc::new(HashedSubwordEncoder::default())),
        Some(u) => HttpEncoder::connect(u, Duration::from_secs(30))
            .map(|e| Arc::new(e) as Arc<dyn TextEncoder>)
            .map_err(|e| ServiceError::Config(format!("encoder {u}: {e}"))),
    }
}

/// Loads models against `graph`, recomputing features unless a matching
/// feature file is configured.
pub fn engines_for_graph(
    graph: KnowledgeGraph,
    section: &EnginesSection,
    encoder: Arc<dyn TextEncoder>,
) -> Result<Engines, ServiceError> {
    let features = match &section.features {
        Some(p) => {
            require("features", p)?;
            let f = NodeFeatureMatrix::load(p).map_err(|e| invalid(p, e))?;
            let ids: Vec<&str> = graph.nodes().iter().map(|n| n.id.as_str()).collect();
            if f.node_ids.iter().map(String::as_str).ne(ids.iter().copied()) {
                featurize::featurize_nodes(&graph, encoder.as_ref()).map_err(|e| invalid(p, e))?
            } else {
                f
            }
        }
        None => featurize::featurize_nodes(&graph, encoder.as_ref())
            .map_err(|e| ServiceError::Config(format!("featurizing: {e}")))?,
    };
    let deepgraph = match &section.deepgraph {
        Some(p) => {
            require("deepgraph checkpoint", p)?;
            let ckpt = Checkpoint::load(p).map_err(|e| invalid(p, e))?;
            let model = SageModel::from_checkpoint(&ckpt).map_err(|e| invalid(p, e))?;
            Some(Arc::new(DeepGraphEngine::new(model, &graph, &features).map_err(|e| invalid(p, e))?))
        }
        None => None,
    };
    let kblam = match &section.kblam {
        Some(p) => {
            require("kblam checkpoint", p)?;
            let ckpt = Checkpoint::load(p).map_err(|e| invalid(p, e))?;
            Some(Arc::new(KblamModel::from_checkpoint(&ckpt).map_err(|e| invalid(p, e))?))
        }
        None => None,
    };
    let index = match &section.index {
        Some(p) => {
            require("embedding index", &p.join("index.json"))?;
            Some(Arc::new(EmbeddingIndex::load(p).map_err(|e| invalid(p, e))?))
        }
        None => None,
    };
    Ok(Engines { graph: Arc::new(graph), features: Arc::new(features), encoder, deepgraph, kblam, index })
}

/// Every artifact the configuration names, or the first one that is missing.
pub fn load_engines(section: &EnginesSection) -> Result<Engines, ServiceError> {
    require("graph", &section.graph)?;
    let graph = kgraph::import_json(&section.graph).map_err(|e| invalid(&section.graph, e))?;
    let encoder = make_encoder(section.encoder_url.as_deref())?;
    engines_for_graph(graph, section, encoder)
}
