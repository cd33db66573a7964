use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::WalkConfig;
use crate::kgraph::KnowledgeGraph;

/// Uniform walks over the undirected view, `walks_per_node` rounds over
/// every node in canonical order. Nodes without neighbours give length-1 walks.
pub fn random_walks(graph: &KnowledgeGraph, config: &WalkConfig) -> Vec<Vec<usize>> {
    let adj = graph.undirected_adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut corpus = Vec::with_capacity(adj.len() * config.walks_per_node);
    for _ in 0..config.walks_per_node {
        for start in 0..adj.len() {
            let mut walk = Vec::with_capacity(config.walk_length);
            walk.push(start);
            let mut cur = start;
            while walk.len() < config.walk_length && !adj[cur].is_empty() {
                cur = adj[cur][rng.gen_range(0..adj[cur].len())];
                walk.push(cur);
            }
            corpus.push(walk);
        }
    }
    corpus
}
