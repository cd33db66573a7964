use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Backend, RouterError, RoutingDecision};
use crate::deepgraph::{compile_query, traverse_path, DeepGraphAnswer, DeepGraphEngine};
use crate::embed::{query_topk, EmbeddingIndex};
use crate::featurize::{NodeFeatureMatrix, TextEncoder};
use crate::kblam::{self, KblamModel};
use crate::kgraph::{GraphFragment, KnowledgeGraph};

/// Most context neighbours added around the answers in a result subgraph.
pub const CONTEXT_LIMIT: usize = 40;

/// Loaded artifacts. Missing engines make dispatch to them fail.
pub struct Engines {
    pub graph: Arc<KnowledgeGraph>,
    pub features: Arc<NodeFeatureMatrix>,
    pub encoder: Arc<dyn TextEncoder>,
    pub deepgraph: Option<Arc<DeepGraphEngine>>,
    pub kblam: Option<Arc<KblamModel>>,
    pub index: Option<Arc<EmbeddingIndex>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedId {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    /// Witness path from a start node to each answer.
    pub paths: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hops: Option<usize>,
    /// Head-averaged attention over the window, highest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attention: Vec<RankedId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicted: Vec<String>,
    #[serde(default)]
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedAnswer {
    pub query: String,
    pub decision: RoutingDecision,
    pub ranked: Vec<RankedId>,
    pub trace: Trace,
    pub subgraph: GraphFragment,
    pub graph_version: u64,
    pub latency_ms: f64,
}

fn unavailable(name: &str) -> RouterError {
    RouterError::BackendUnavailable(name.to_string())
}

/// Answers, their witness paths and up to [`CONTEXT_LIMIT`] one-hop neighbours.
fn result_subgraph(graph: &KnowledgeGraph, ranked: &[RankedId], trace: &Trace) -> GraphFragment {
    let mut members: Vec<usize> = Vec::new();
    let mut core = std::collections::BTreeSet::new();
    for id in ranked.iter().map(|r| &r.id).chain(trace.paths.values().flatten()).chain(trace.center.iter()) {
        if let Some(i) = graph.index_of(id) {
            if core.insert(i) {
                members.push(i);
            }
        }
    }
    let mut added = 0;
    'outer: for r in ranked {
        let Some(i) = graph.index_of(&r.id) else { continue };
        for j in graph.undirected_neighbors(i) {
            if added == CONTEXT_LIMIT {
                break 'outer;
            }
            if core.insert(j) {
                members.push(j);
                added += 1;
            }
        }
    }
    graph.fragment(&members)
}

pub fn dispatch(
    decision: &RoutingDecision,
    query: &str,
    engines: &Engines,
    k: usize,
) -> Result<RoutedAnswer, RouterError> {
    let started = Instant::now();
    if query.trim().is_empty() {
        return Err(RouterError::EmptyQuery);
    }
    let graph = engines.graph.as_ref();
    let features = engines.features.as_ref();
    let encoder = engines.encoder.as_ref();
    let mut trace = Trace::default();
    let ranked: Vec<RankedId> = match decision.backend {
        Backend::DeepGraph => {
            let answer = match compile_query(graph, query) {
                Some(q) => {
                    let hits = traverse_path(graph, &q.pattern).map_err(|e| RouterError::Backend(e.to_string()))?;
                    DeepGraphAnswer::Traversal { query: q, hits }
                }
                None => {
                    let engine = engines.deepgraph.as_ref().ok_or_else(|| unavailable("deepgraph"))?;
                    engine
                        .answer(graph, features, query, encoder, k)
                        .map_err(|e| RouterError::Backend(e.to_string()))?
                }
            };
            match answer {
                DeepGraphAnswer::Traversal { query, hits } => {
                    trace.template = Some(query.template);
                    hits.into_iter()
                        .map(|h| {
                            let id = h.node.clone();
                            trace.paths.insert(id.clone(), h.path);
                            RankedId { id, score: 1.0 }
                        })
                        .collect()
                }
                DeepGraphAnswer::SingleHop { ranked } => ranked
                    .into_iter()
                    .map(|r| {
                        trace.paths.insert(r.id.clone(), vec![r.seed.clone(), r.id.clone()]);
                        RankedId { id: r.id, score: r.score }
                    })
                    .collect(),
            }
        }
        Backend::KBLam => {
            let model = engines.kblam.as_ref().ok_or_else(|| unavailable("kblam"))?;
            let a = kblam::answer(model, graph, features, encoder, query, None, k)
                .map_err(|e| RouterError::Backend(e.to_string()))?;
            let mut attention: Vec<RankedId> = a
                .attention
                .node_ids
                .iter()
                .zip(&a.attention.averaged)
                .map(|(id, &w)| RankedId { id: id.clone(), score: w })
                .collect();
            attention.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| x.id.cmp(&y.id)));
            attention.truncate(k.max(1));
            trace.attention = attention;
            trace.center = Some(a.center);
            trace.hops = Some(a.hops);
            trace.paths = a.paths;
            trace.predicted = a.predicted;
            trace.low_confidence = a.low_confidence;
            a.ranked.into_iter().map(|s| RankedId { id: s.id, score: s.probability }).collect()
        }
        Backend::Embedding => {
            let index = engines.index.as_ref().ok_or_else(|| unavailable("embedding index"))?;
            query_topk(index, encoder, query, k)
                .map_err(|e| RouterError::Backend(e.to_string()))?
                .into_iter()
                .filter(|(id, _)| graph.node(id).is_some())
                .map(|(id, score)| RankedId { id, score })
                .collect()
        }
    };
    let subgraph = result_subgraph(graph, &ranked, &trace);
    Ok(RoutedAnswer {
        query: query.to_string(),
        decision: decision.clone(),
        ranked,
        trace,
        subgraph,
        graph_version: graph.version,
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
