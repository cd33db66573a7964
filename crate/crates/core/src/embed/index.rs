use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbedError, WalkConfig};
use crate::featurize::{encode_text, NodeFeatureMatrix, TextEncoder};
use crate::kgraph::KnowledgeGraph;
use crate::numkernel::{dot, l2_norm, Matrix};
use crate::util::write_atomic;

pub const INDEX_SCHEMA_VERSION: u32 = 1;
const META_FILE: &str = "index.json";
const VEC_FILE: &str = "index.vec";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub schema_version: u32,
    pub graph_version: u64,
    pub encoder_id: String,
    pub text_dim: usize,
    pub structural_dim: usize,
    pub walk_config: WalkConfig,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    meta: IndexMeta,
    node_ids: Vec<String>,
    /// Layout of `index.vec`.
    layout: String,
}

/// Node ids with unit-length (or zero) textual and structural rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub meta: IndexMeta,
    pub node_ids: Vec<String>,
    pub textual: Matrix,
    pub structural: Matrix,
}

fn normalize_rows(m: &mut Matrix) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let n = l2_norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
}

pub fn build_index(
    graph: &KnowledgeGraph,
    features: &NodeFeatureMatrix,
    structural: &Matrix,
    config: &WalkConfig,
) -> Result<EmbeddingIndex, EmbedError> {
    let ids: Vec<String> = graph.nodes().iter().map(|n| n.id.clone()).collect();
    if features.node_ids != ids {
        return Err(EmbedError::Misaligned("feature rows do not follow graph order".into()));
    }
    if structural.rows() != ids.len() {
        return Err(EmbedError::Misaligned(format!(
            "{} structural rows for {} nodes",
            structural.rows(),
            ids.len()
        )));
    }
    let text_dim = features.matrix.cols() - crate::featurize::NUMERIC_DIM;
    let mut textual = Matrix::zeros(ids.len(), text_dim);
    for r in 0..ids.len() {
        textual.row_mut(r).copy_from_slice(features.text(r));
    }
    normalize_rows(&mut textual);
    let mut structural = structural.clone();
    normalize_rows(&mut structural);
    Ok(EmbeddingIndex {
        meta: IndexMeta {
            schema_version: INDEX_SCHEMA_VERSION,
            graph_version: graph.version,
            encoder_id: features.encoder_id.clone(),
            text_dim,
            structural_dim: structural.cols(),
            walk_config: *config,
        },
        node_ids: ids,
        textual,
        structural,
    })
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    /// Writes `index.json` and `index.vec` (little-endian f64, textual
    /// block then structural block, both row-major) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), EmbedError> {
        std::fs::create_dir_all(dir)?;
        let file = IndexFile {
            meta: self.meta.clone(),
            node_ids: self.node_ids.clone(),
            layout: "f64-le row-major: textual N x text_dim, then structural N x structural_dim".into(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| EmbedError::Malformed(e.to_string()))?;
        let mut bytes = Vec::with_capacity(8 * (self.textual.data().len() + self.structural.data().len()));
        for v in self.textual.data().iter().chain(self.structural.data()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        write_atomic(&dir.join(VEC_FILE), &bytes)?;
        write_atomic(&dir.join(META_FILE), json.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, EmbedError> {
        let file: IndexFile = serde_json::from_str(&std::fs::read_to_string(dir.join(META_FILE))?)
            .map_err(|e| EmbedError::Malformed(e.to_string()))?;
        if file.meta.schema_version != INDEX_SCHEMA_VERSION {
            return Err(EmbedError::Malformed(format!("unsupported schema version {}", file.meta.schema_version)));
        }
        let bytes = std::fs::read(dir.join(VEC_FILE))?;
        let n = file.node_ids.len();
        let (t, s) = (file.meta.text_dim, file.meta.structural_dim);
        if bytes.len() != 8 * n * (t + s) {
            return Err(EmbedError::Malformed(format!("{} has {} bytes, expected {}", VEC_FILE, bytes.len(), 8 * n * (t + s))));
        }
        let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let (a, b) = values.split_at(n * t);
        let textual = Matrix::from_vec(n, t, a.to_vec()).map_err(|e| EmbedError::Malformed(e.to_string()))?;
        let structural = Matrix::from_vec(n, s, b.to_vec()).map_err(|e| EmbedError::Malformed(e.to_string()))?;
        Ok(Self { meta: file.meta, node_ids: file.node_ids, textual, structural })
    }
}

/// Cosines are kept on a 1e-12 grid; parallel rows otherwise differ in the
/// last bits after normalisation and the id tie-break would not apply.
fn quantize(c: f64) -> f64 {
    // adding 0.0 turns -0.0 into 0.0 for total_cmp
    ((c * 1e12).round() / 1e12).clamp(-1.0, 1.0) + 0.0
}

/// Descending score, then id ascending.
fn top_k(scored: Vec<(usize, f64)>, ids: &[String], k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(usize, f64)> = scored.into_iter().map(|(i, c)| (i, quantize(c))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0])));
    scored.into_iter().take(k).map(|(i, s)| (ids[i].clone(), s)).collect()
}

/// Exact cosine top-k of `text` against the textual rows. Nodes without
/// text are never returned.
pub fn query_topk(
    index: &EmbeddingIndex,
    encoder: &dyn TextEncoder,
    text: &str,
    k: usize,
) -> Result<Vec<(String, f64)>, EmbedError> {
    if index.is_empty() {
        return Err(EmbedError::EmptyIndex);
    }
    let mut q = encode_text(encoder, text);
    if q.len() != index.meta.text_dim {
        return Err(EmbedError::Misaligned(format!(
            "query has {} dims, index text rows have {}",
            q.len(),
            index.meta.text_dim
        )));
    }
    let qn = l2_norm(&q);
    if qn > 0.0 {
        q.iter_mut().for_each(|v| *v /= qn);
    }
    let scored = (0..index.len())
        .filter(|&r| index.textual.row(r).iter().any(|&v| v != 0.0))
        .map(|r| (r, dot(&q, index.textual.row(r))))
        .collect();
    Ok(top_k(scored, &index.node_ids, k))
}

/// Nearest neighbours of `node_id` by structural cosine, the node itself excluded.
pub fn expand_structural(index: &EmbeddingIndex, node_id: &str, k: usize) -> Result<Vec<(String, f64)>, EmbedError> {
    let at = index.position(node_id).ok_or_else(|| EmbedError::UnknownNode(node_id.to_string()))?;
    let q = index.structural.row(at);
    let scored = (0..index.len())
        .filter(|&r| r != at)
        .map(|r| (r, dot(q, index.structural.row(r))))
        .collect();
    Ok(top_k(scored, &index.node_ids, k))
}
