//! Random-walk structural embeddings and a text/structure similarity index.

mod index;
mod skipgram;
mod walks;

pub use index::{build_index, expand_structural, query_topk, EmbeddingIndex, IndexMeta, INDEX_SCHEMA_VERSION};
pub use skipgram::train_skipgram;
pub use walks::random_walks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::NodeFeatureMatrix;
use crate::kgraph::KnowledgeGraph;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("non-finite skip-gram loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid walk configuration: {0}")]
    InvalidConfig(String),
    #[error("inputs are not aligned: {0}")]
    Misaligned(String),
    #[error("malformed index: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub embedding_dim: usize,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    /// Starting SGD step, decayed linearly to 1e-4 of itself.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 10,
            walk_length: 40,
            window: 5,
            embedding_dim: 128,
            negatives_per_positive: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let positive = [
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("embedding_dim", self.embedding_dim),
            ("negatives_per_positive", self.negatives_per_positive),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(EmbedError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.window >= self.walk_length {
            return Err(EmbedError::InvalidConfig("window must be shorter than walk_length".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Walks, skip-gram training and index assembly in one call.
pub fn build_embeddings(
    graph: &KnowledgeGraph,
    features: &NodeFeatureMatrix,
    config: &WalkConfig,
) -> Result<EmbeddingIndex, EmbedError> {
    config.validate()?;
    let corpus = random_walks(graph, config);
    let structural = train_skipgram(&corpus, graph.node_count(), config)?;
    build_index(graph, features, &structural, config)
}
