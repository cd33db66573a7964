use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repograph_core::kgraph::{Edge, EdgeType, KnowledgeGraph, Node, NodeType, Provenance};
use repograph_core::numkernel::Matrix;

pub fn graph_from(nodes: Vec<(String, NodeType)>, edges: &[(usize, usize, EdgeType)]) -> KnowledgeGraph {
    let es = edges
        .iter()
        .map(|&(u, v, t)| Edge {
            src: nodes[u].0.clone(),
            dst: nodes[v].0.clone(),
            edge_type: t,
            attrs: Default::default(),
        })
        .collect();
    let ns = nodes
        .iter()
        .map(|(id, t)| Node::new(id.clone(), *t, id.clone()))
        .collect();
    KnowledgeGraph::from_parts(Provenance::default(), 0, ns, es).unwrap()
}

/// `k` disjoint cliques of Function nodes joined by CALLS edges. Node ids sort
/// clique by clique, so node `i` belongs to clique `i / size`.
pub fn planted_cliques(k: usize, size: usize) -> KnowledgeGraph {
    let nodes = (0..k * size)
        .map(|i| (format!("function:c{}::n{:03}", i / size, i % size), NodeType::Function))
        .collect();
    let mut edges = Vec::new();
    for c in 0..k {
        for a in 0..size {
            for b in a + 1..size {
                edges.push((c * size + a, c * size + b, EdgeType::Calls));
            }
        }
    }
    graph_from(nodes, &edges)
}

/// Erdős–Rényi graph of Function nodes.
pub fn uniform_random_graph(n: usize, p: f64, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n).map(|i| (format!("function:n{i:04}"), NodeType::Function)).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((a, b, EdgeType::Calls));
            }
        }
    }
    graph_from(nodes, &edges)
}

pub fn gaussian_features(n: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim)
        .map(|_| {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Matrix::from_vec(n, dim, data).unwrap()
}

/// Random schema-respecting graph with `n` nodes and `m` edge attempts.
pub fn random_typed_graph(n: usize, m: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // biased towards the history/code chain so that typed walks are common
    let pool = [
        NodeType::PullRequest,
        NodeType::Commit,
        NodeType::File,
        NodeType::Function,
        NodeType::Class,
        NodeType::Author,
        NodeType::User,
        NodeType::Docstring,
    ];
    let nodes: Vec<(String, NodeType)> = (0..n)
        .map(|i| {
            let t = pool[rng.gen_range(0..pool.len())];
            (format!("n{i:03}"), t)
        })
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut edges = Vec::new();
    for _ in 0..m {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let t = EdgeType::ALL[rng.gen_range(0..EdgeType::ALL.len())];
        if t.allows(nodes[u].1, nodes[v].1) && seen.insert((u, v, t)) {
            edges.push((u, v, t));
        }
    }
    graph_from(nodes, &edges)
}
