use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kgraph::{EdgeType, KnowledgeGraph, NodeType};

use super::DeepGraphError;

pub type Pair = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.85,
            val: 0.05,
            test: 0.10,
        }
    }
}

/// Partition of the undirected edge set plus verified non-edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train_pos: Vec<Pair>,
    pub val_pos: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub train_neg: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub test_neg: Vec<Pair>,
    pub seed: u64,
}

pub const MIN_SPLIT_EDGES: usize = 10;

/// Distinct unordered node pairs joined by at least one edge, self-loops dropped.
pub fn undirected_pairs(graph: &KnowledgeGraph) -> Vec<Pair> {
    let mut set = BTreeSet::new();
    for (u, outs) in (0..graph.node_count()).map(|u| (u, graph.out_edges(u))) {
        for &(_, v) in outs {
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
    }
    set.into_iter().collect()
}

/// Whether some edge type may join nodes of these two types, in either direction.
pub fn types_compatible(a: NodeType, b: NodeType) -> bool {
    EdgeType::ALL.iter().any(|t| t.allows(a, b) || t.allows(b, a))
}

/// Samples distinct non-edges of compatible endpoint types.
pub struct NegativeSampler {
    types: Vec<NodeType>,
    compat: [[bool; 16]; 16],
}

impl NegativeSampler {
    pub fn new(graph: &KnowledgeGraph) -> Self {
        let mut compat = [[false; 16]; 16];
        for &a in NodeType::ALL {
            for &b in NodeType::ALL {
                compat[a.index()][b.index()] = types_compatible(a, b);
            }
        }
        Self {
            types: graph.nodes().iter().map(|n| n.node_type).collect(),
            compat,
        }
    }

    pub fn compatible(&self, u: usize, v: usize) -> bool {
        self.compat[self.types[u].index()][self.types[v].index()]
    }

    /// Up to `count` pairs not in `exclude`; fewer when the space runs out.
    pub fn sample(
        &self,
        count: usize,
        exclude: &BTreeSet<Pair>,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Pair> {
        let n = self.types.len();
        let mut taken = BTreeSet::new();
        let mut out = Vec::with_capacity(count);
        if n < 2 {
            return out;
        }
        let budget = 200 * count.max(1) + 1000;
        for _ in 0..budget {
            if out.len() == count {
                break;
            }
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u == v || !self.compatible(u, v) {
                continue;
            }
            let p = (u.min(v), u.max(v));
            if exclude.contains(&p) || !taken.insert(p) {
                continue;
            }
            out.push(p);
        }
        out
    }
}

/// Deterministic train/val/test split of the undirected edge set.
pub fn split_edges(
    graph: &KnowledgeGraph,
    ratios: SplitRatios,
    neg_ratio: f64,
    seed: u64,
) -> Result<EdgeSplit, DeepGraphError> {
    let total = ratios.train + ratios.val + ratios.test;
    if (total - 1.0).abs() > 1e-9 || ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0 {
        return Err(DeepGraphError::InvalidConfig(format!(
            "split ratios must be non-negative and sum to 1 (got {total})"
        )));
    }
    let mut pairs = undirected_pairs(graph);
    if pairs.len() < MIN_SPLIT_EDGES {
        return Err(DeepGraphError::GraphTooSmall {
            edges: pairs.len(),
            required: MIN_SPLIT_EDGES,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let n = pairs.len();
    let n_train = (ratios.train * n as f64).round() as usize;
    let n_val = ((ratios.val * n as f64).round() as usize).min(n - n_train);
    let test_pos = pairs.split_off(n_train + n_val);
    let val_pos = pairs.split_off(n_train);
    let train_pos = pairs;

    let mut exclude: BTreeSet<Pair> = undirected_pairs(graph).into_iter().collect();
    let sampler = NegativeSampler::new(graph);
    let mut draw = |k: usize, exclude: &mut BTreeSet<Pair>| {
        let want = (neg_ratio * k as f64).round() as usize;
        let neg = sampler.sample(want, exclude, &mut rng);
        exclude.extend(neg.iter().copied());
        neg
    };
    let train_neg = draw(train_pos.len(), &mut exclude);
    let val_neg = draw(val_pos.len(), &mut exclude);
    let test_neg = draw(test_pos.len(), &mut exclude);
    Ok(EdgeSplit {
        train_pos,
        val_pos,
        test_pos,
        train_neg,
        val_neg,
        test_neg,
        seed,
    })
}
