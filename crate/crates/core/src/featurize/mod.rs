//! Node feature vectors: normalized code metrics followed by a text embedding.

mod encoder;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgraph::{KnowledgeGraph, Node, NodeType};
use crate::numkernel::Matrix;
use crate::util::write_atomic;

pub use encoder::{
    encode_text, subwords, tokenize, HashedSubwordEncoder, HttpEncoder, TextEncoder, TEXT_DIM,
};

pub const NUMERIC_DIM: usize = 32;
pub const FEATURE_DIM: usize = NUMERIC_DIM + TEXT_DIM;

/// First one-hot slot; slots `TYPE_OFFSET..TYPE_OFFSET + 16` hold the node type.
pub const TYPE_OFFSET: usize = 7;
/// First boolean flag slot.
pub const FLAG_OFFSET: usize = TYPE_OFFSET + 16;

/// Names of the numeric slots, in order.
pub const NUMERIC_NAMES: [&str; NUMERIC_DIM] = [
    "complexity",
    "params",
    "code_length",
    "line_span",
    "degree",
    "in_degree",
    "out_degree",
    "type:File",
    "type:Function",
    "type:Class",
    "type:Docstring",
    "type:ReturnType",
    "type:Decorator",
    "type:ControlFlow",
    "type:TryExcept",
    "type:Import",
    "type:StringConstant",
    "type:ComplexityMetric",
    "type:PullRequest",
    "type:Commit",
    "type:User",
    "type:Author",
    "type:Component",
    "is_async",
    "has_docstring",
    "has_decorators",
    "has_return_annotation",
    "external",
    "is_method",
    "pr_merged",
    "pr_open",
    "has_text",
];

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("text encoder unavailable: {0}")]
    EncoderUnavailable(String),
    #[error("encoder dimension {found} does not match the feature layout ({expected})")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed feature file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatureMatrix {
    pub node_ids: Vec<String>,
    pub encoder_id: String,
    pub matrix: Matrix,
}

impl NodeFeatureMatrix {
    pub fn numeric(&self, row: usize) -> &[f64] {
        &self.matrix.row(row)[..NUMERIC_DIM]
    }

    pub fn text(&self, row: usize) -> &[f64] {
        &self.matrix.row(row)[NUMERIC_DIM..]
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    pub fn save(&self, path: &Path) -> Result<(), FeaturizeError> {
        let text = serde_json::to_string(self).map_err(|e| FeaturizeError::Malformed(e.to_string()))?;
        write_atomic(path, text.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FeaturizeError> {
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| FeaturizeError::Malformed(e.to_string()))?;
        if m.matrix.rows() != m.node_ids.len() || m.matrix.cols() != FEATURE_DIM {
            return Err(FeaturizeError::Malformed("shape does not match node ids".into()));
        }
        Ok(m)
    }
}

/// Concatenated textual fields used for the text slice.
pub fn node_text(node: &Node) -> String {
    let mut parts: Vec<&str> = vec![node.label.as_str()];
    for key in ["docstring", "text", "message", "title", "body", "value"] {
        if let Some(s) = node.attr_str(key).map(str::trim) {
            if !s.is_empty() && !parts.contains(&s) {
                parts.push(s);
            }
        }
    }
    parts.join(" ").trim().to_string()
}

fn int_attr(node: &Node, key: &str) -> f64 {
    node.attr(key).and_then(|v| v.as_f64()).unwrap_or(0.0)
}

fn flag(node: &Node, key: &str) -> bool {
    node.attr(key).and_then(|v| v.as_bool()).unwrap_or(false)
}

fn raw_numeric(graph: &KnowledgeGraph, i: usize) -> [f64; NUMERIC_DIM] {
    let n = graph.node_at(i);
    let mut v = [0.0; NUMERIC_DIM];
    v[0] = int_attr(n, "complexity");
    v[1] = int_attr(n, "params");
    v[2] = int_attr(n, "code_length");
    if let (Some(s), Some(e)) = (
        n.attr("start_line").and_then(|x| x.as_i64()),
        n.attr("end_line").and_then(|x| x.as_i64()),
    ) {
        v[3] = (e - s + 1).max(0) as f64;
    }
    v[4] = graph.degree(i) as f64;
    v[5] = graph.in_edges(i).len() as f64;
    v[6] = graph.out_edges(i).len() as f64;
    v[TYPE_OFFSET + n.node_type.index()] = 1.0;
    let flags = [
        flag(n, "is_async"),
        n.attr_str("docstring").is_some_and(|d| !d.is_empty()),
        n.attr_str("decorators").is_some_and(|d| !d.is_empty()),
        n.attr_str("return_annotation").is_some(),
        flag(n, "external"),
        n.node_type == NodeType::Function
            && graph
                .in_edges(i)
                .iter()
                .any(|&(_, j)| graph.node_at(j).node_type == NodeType::Class),
        flag(n, "merged"),
        n.attr_str("state") == Some("open"),
        !node_text(n).is_empty(),
    ];
    for (k, f) in flags.into_iter().enumerate() {
        v[FLAG_OFFSET + k] = if f { 1.0 } else { 0.0 };
    }
    v
}

/// Per-column min-max scaling. A constant column maps to 1 where the value is
/// positive and 0 elsewhere.
pub fn min_max_normalize(rows: &mut [[f64; NUMERIC_DIM]]) {
    for c in 0..NUMERIC_DIM {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])));
        let range = hi - lo;
        for r in rows.iter_mut() {
            r[c] = if range > 0.0 {
                (r[c] - lo) / range
            } else if r[c] > 0.0 {
                1.0
            } else {
                0.0
            };
        }
    }
}

const BATCH: usize = 256;

/// Builds the N×800 feature matrix, rows in graph node order.
pub fn featurize_nodes(
    graph: &KnowledgeGraph,
    encoder: &dyn TextEncoder,
) -> Result<NodeFeatureMatrix, FeaturizeError> {
    if encoder.dim() != TEXT_DIM {
        return Err(FeaturizeError::DimensionMismatch {
            expected: TEXT_DIM,
            found: encoder.dim(),
        });
    }
    let n = graph.node_count();
    let mut numeric: Vec<[f64; NUMERIC_DIM]> = (0..n).into_par_iter().map(|i| raw_numeric(graph, i)).collect();
    min_max_normalize(&mut numeric);

    let texts: Vec<String> = graph.nodes().par_iter().map(node_text).collect();
    let fallback = HashedSubwordEncoder::default();
    let mut text_vecs = Vec::with_capacity(n);
    for chunk in texts.chunks(BATCH) {
        let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
        match encoder.encode_batch(&refs) {
            Ok(v) => text_vecs.extend(v),
            Err(e) => {
                tracing::warn!("text encoder failed, using default for this batch: {e}");
                text_vecs.extend(refs.par_iter().map(|t| fallback.encode(t)).collect::<Vec<_>>());
            }
        }
    }

    let mut data = Vec::with_capacity(n * FEATURE_DIM);
    for (num, (text, t)) in numeric.iter().zip(text_vecs.iter().zip(&texts)) {
        data.extend_from_slice(num);
        if t.is_empty() {
            data.extend(std::iter::repeat(0.0).take(TEXT_DIM));
        } else {
            data.extend_from_slice(text);
        }
    }
    Ok(NodeFeatureMatrix {
        node_ids: graph.nodes().iter().map(|x| x.id.clone()).collect(),
        encoder_id: encoder.encoder_id(),
        matrix: Matrix::from_vec(n, FEATURE_DIM, data).expect("feature shape"),
    })
}
