use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::deepgraph::{resolve_entities, seed_text, text_seeds};
use crate::featurize::{encode_text, NodeFeatureMatrix, TextEncoder};
use crate::kgraph::{shortest_path, KnowledgeGraph};

use super::model::{AttentionTrace, KblamModel, Window};
use super::train::predict;
use super::KblamError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowHint {
    pub center: Option<String>,
    pub hops: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNode {
    pub id: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KblamAnswer {
    pub center: String,
    pub hops: usize,
    pub ranked: Vec<ScoredNode>,
    /// Nodes with at least half the top probability.
    pub predicted: Vec<String>,
    pub low_confidence: bool,
    pub attention: AttentionTrace,
    /// Center-to-answer paths inside the window, for the top-k nodes.
    pub paths: BTreeMap<String, Vec<String>>,
}

/// Window center: the hinted node, else the first entity the question names,
/// else the node whose text is most similar to the question.
fn pick_center(
    graph: &KnowledgeGraph,
    features: &NodeFeatureMatrix,
    encoder: &dyn TextEncoder,
    question: &str,
    hint: Option<&str>,
) -> Result<String, KblamError> {
    if let Some(c) = hint {
        return graph
            .node(c)
            .map(|n| n.id.clone())
            .ok_or_else(|| KblamError::UnknownCenter(c.to_string()));
    }
    if let Some(first) = resolve_entities(graph, question).into_iter().next() {
        return Ok(first);
    }
    let q = encode_text(encoder, &seed_text(question));
    text_seeds(features, &q, 1)
        .first()
        .map(|&(r, _)| features.node_ids[r].clone())
        .ok_or_else(|| KblamError::UnknownCenter(question.to_string()))
}

pub fn answer(
    model: &KblamModel,
    graph: &KnowledgeGraph,
    features: &NodeFeatureMatrix,
    encoder: &dyn TextEncoder,
    question: &str,
    hint: Option<&WindowHint>,
    k: usize,
) -> Result<KblamAnswer, KblamError> {
    let hops = hint.and_then(|h| h.hops).unwrap_or(model.config.default_hops);
    let center = pick_center(graph, features, encoder, question, hint.and_then(|h| h.center.as_deref()))?;
    let window = Window::expand(graph, &center, hops)?;
    let query = encode_text(encoder, question);
    let p = predict(model, &features.matrix, &window, &query)?;
    let ranking = p.ranking(graph, &window);
    let id_of = |l: usize| graph.node_at(window.nodes[l]).id.clone();
    let ranked: Vec<ScoredNode> = ranking
        .iter()
        .take(k.max(1))
        .map(|&l| ScoredNode { id: id_of(l), probability: p.probs[l] })
        .collect();
    let mut predicted: Vec<String> = p.predicted_set().into_iter().map(id_of).collect();
    predicted.sort();
    let low_confidence = ranked.first().is_none_or(|r| r.probability < model.config.low_confidence);

    let heads = p.attention.rows();
    let per_head: Vec<Vec<f64>> = (0..heads).map(|h| p.attention.row(h).to_vec()).collect();
    let averaged: Vec<f64> = (0..window.len())
        .map(|i| per_head.iter().map(|r| r[i]).sum::<f64>() / heads as f64)
        .collect();
    let mut by_attention: Vec<usize> = (0..window.len()).collect();
    by_attention.sort_by(|&a, &b| averaged[b].total_cmp(&averaged[a]).then_with(|| id_of(a).cmp(&id_of(b))));
    let attention = AttentionTrace {
        node_ids: (0..window.len()).map(id_of).collect(),
        per_head,
        averaged,
        top_nodes: by_attention.into_iter().take(5).map(id_of).collect(),
    };

    let sub = window_graph(graph, &window);
    let mut paths = BTreeMap::new();
    for r in &ranked {
        let (from, to) = (sub.index_of(&center), sub.index_of(&r.id));
        if let (Some(a), Some(b)) = (from, to) {
            if let Some(path) = shortest_path(&sub, a, b) {
                paths.insert(r.id.clone(), path.into_iter().map(|i| sub.node_at(i).id.clone()).collect());
            }
        }
    }
    Ok(KblamAnswer { center, hops, ranked, predicted, low_confidence, attention, paths })
}

fn window_graph(graph: &KnowledgeGraph, window: &Window) -> KnowledgeGraph {
    let frag = graph.fragment(&window.nodes);
    KnowledgeGraph::from_parts(graph.provenance.clone(), graph.version, frag.nodes, frag.edges)
        .expect("fragment is closed")
}
