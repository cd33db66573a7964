//! Link prediction (GraphSAGE, GAE, HAN-lite) and typed multi-hop traversal.

mod gae;
mod han;
mod metrics;
mod query;
mod sage;
mod split;
mod traverse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{NodeFeatureMatrix, TextEncoder};
use crate::kgraph::KnowledgeGraph;
use crate::numkernel::{KernelError, Matrix};

pub use gae::{gae_objective, train_gae, GaeConfig, GaeModel, GaeTraining};
pub use han::{
    han_objective, silhouette, train_han, HanBatch, HanConfig, HanEpoch, HanGraph, HanLoss,
    HanModel, HanTraining,
};
pub use metrics::{average_precision, eval_link_prediction, roc_auc, LinkPredMetrics};
pub use query::{
    answer_single_hop, compile_query, functions_named, quoted_identifiers, resolve_entities, target_types,
    seed_text, text_seeds, CompiledQuery, RankedNode, SEED_COUNT, SEED_THRESHOLD,
};
pub use sage::{
    sage_objective, top3_accuracy, train_sage_supervised, EpochRecord, SageConfig, SageModel,
    SageTraining,
};
pub use split::{
    split_edges, types_compatible, undirected_pairs, EdgeSplit, NegativeSampler, Pair,
    SplitRatios, MIN_SPLIT_EDGES,
};
pub use traverse::{traverse_path, PathHit, PathPattern, StartFilter};

#[derive(Debug, Error)]
pub enum DeepGraphError {
    #[error("graph has {edges} usable edges; at least {required} are needed")]
    GraphTooSmall { edges: usize, required: usize },
    #[error("loss became non-finite ({loss}) at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("metrics need at least one positive and one negative score")]
    EmptyInput,
    #[error("invalid path pattern: {0}")]
    InvalidPattern(String),
    #[error("no node is textually similar to `{0}`")]
    NoSeedFound(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("feature matrix has {rows} rows for {nodes} nodes")]
    FeatureMismatch { nodes: usize, rows: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Result of a routed structural query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeepGraphAnswer {
    Traversal { query: CompiledQuery, hits: Vec<PathHit> },
    SingleHop { ranked: Vec<RankedNode> },
}

/// A trained SAGE model with embeddings precomputed over the whole graph.
pub struct DeepGraphEngine {
    pub model: SageModel,
    embeddings: Matrix,
}

impl DeepGraphEngine {
    pub fn new(model: SageModel, graph: &KnowledgeGraph, features: &NodeFeatureMatrix) -> Result<Self, DeepGraphError> {
        if features.matrix.rows() != graph.node_count() {
            return Err(DeepGraphError::FeatureMismatch {
                nodes: graph.node_count(),
                rows: features.matrix.rows(),
            });
        }
        if model.in_dim() != features.matrix.cols() {
            return Err(DeepGraphError::InvalidConfig(format!(
                "model expects {} input features, matrix has {}",
                model.in_dim(),
                features.matrix.cols()
            )));
        }
        let pairs = undirected_pairs(graph);
        let embeddings = model.embed(graph.node_count(), &pairs, &features.matrix);
        Ok(Self { model, embeddings })
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    /// Typed traversal when the question compiles to a template, otherwise
    /// one-hop answering.
    pub fn answer(
        &self,
        graph: &KnowledgeGraph,
        features: &NodeFeatureMatrix,
        question: &str,
        encoder: &dyn TextEncoder,
        k: usize,
    ) -> Result<DeepGraphAnswer, DeepGraphError> {
        if let Some(query) = compile_query(graph, question) {
            let hits = traverse_path(graph, &query.pattern)?;
            return Ok(DeepGraphAnswer::Traversal { query, hits });
        }
        let ranked = answer_single_hop(graph, &self.embeddings, features, question, encoder, k)?;
        Ok(DeepGraphAnswer::SingleHop { ranked })
    }
}
