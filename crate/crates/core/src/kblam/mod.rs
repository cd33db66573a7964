//! Multi-hop question answering: a one-layer GNN over a subgraph window,
//! rectangular multi-head attention from the question into the window, and
//! a per-node scoring head trained with window-softmax cross-entropy.

mod answer;
mod dataset;
mod model;
mod train;

use thiserror::Error;

use crate::numkernel::KernelError;

pub use answer::{answer, KblamAnswer, ScoredNode, WindowHint};
pub use dataset::{
    generate_dataset, load_dataset, parse_dataset, template_names, DatasetSource, QaDataset,
    QaSample, TemplateConfig, WindowSpec,
};
pub use model::{AttentionTrace, KblamConfig, KblamModel, Window, MAX_HOPS};
pub use train::{
    evaluate, kblam_objective, predict, prepare_all, train_kblam, KblamEpoch, KblamTraining,
    PreparedSample, Prediction, QaMetrics,
};

#[derive(Debug, Error)]
pub enum KblamError {
    #[error("{path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("dataset references unknown nodes: {}", ids.join(", "))]
    DanglingNodeRef { ids: Vec<String> },
    #[error("`{question}`: {} outside the sample window", ids.join(", "))]
    OutsideWindow { question: String, ids: Vec<String> },
    #[error("insufficient graph structure: {0}")]
    InsufficientStructure(String),
    #[error("unknown window center `{0}`")]
    UnknownCenter(String),
    #[error("window depth {hops} exceeds the maximum of {max}")]
    HopsTooDeep { hops: usize, max: usize },
    #[error("window has no unmasked nodes")]
    AllMaskedRow,
    #[error("dataset has no training samples")]
    EmptyDataset,
    #[error("loss became non-finite ({loss}) at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Kernel(KernelError),
}

impl From<KernelError> for KblamError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::AllMaskedRow(_) => Self::AllMaskedRow,
            other => Self::Kernel(other),
        }
    }
}
