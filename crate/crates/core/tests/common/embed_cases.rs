//! Shared cases for the embedding suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repograph_core::embed::{build_index, random_walks, train_skipgram, EmbeddingIndex, WalkConfig};
use repograph_core::featurize::{FeaturizeError, NodeFeatureMatrix, TextEncoder, NUMERIC_DIM};
use repograph_core::kgraph::{EdgeType, KnowledgeGraph, NodeType};
use repograph_core::numkernel::Matrix;

use super::oracles::cos;
use super::synth;

pub fn bridged_cliques(size: usize) -> KnowledgeGraph {
    let nodes = (0..2 * size).map(|i| (format!("function:c{}::n{:02}", i / size, i % size), NodeType::Function)).collect();
    let mut edges = Vec::new();
    for c in 0..2 {
        for a in 0..size {
            for b in a + 1..size {
                edges.push((c * size + a, c * size + b, EdgeType::Calls));
            }
        }
    }
    edges.push((size - 1, size, EdgeType::Calls));
    synth::graph_from(nodes, &edges)
}

pub fn clique_gap(seed: u64) -> (f64, f64, Matrix) {
    let size = 10;
    let g = bridged_cliques(size);
    let cfg = WalkConfig { seed, ..Default::default() };
    let z = train_skipgram(&random_walks(&g, &cfg), g.node_count(), &cfg).unwrap();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for a in 0..2 * size {
        for b in a + 1..2 * size {
            let c = cos(z.row(a), z.row(b));
            if a / size == b / size {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    (intra / ni as f64, inter / nx as f64, z)
}

pub struct FixedEncoder(pub Vec<f64>);

impl TextEncoder for FixedEncoder {
    fn encoder_id(&self) -> String {
        "fixed".into()
    }
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, FeaturizeError> {
        Ok(texts.iter().map(|_| self.0.clone()).collect())
    }
}

pub struct Instance {
    pub graph: KnowledgeGraph,
    pub text: Vec<Vec<f64>>,
    pub structural: Vec<Vec<f64>>,
    pub query: Vec<f64>,
}

/// Small integer coordinates so that exact ties and zero rows both occur.
pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..25);
    let (t, s) = (rng.gen_range(1..6), rng.gen_range(1..6));
    let graph = synth::uniform_random_graph(n, 0.2, seed);
    let mut coord = |p_zero: f64| if rng.gen_bool(p_zero) { 0.0 } else { rng.gen_range(-2..=2) as f64 };
    let text: Vec<Vec<f64>> = (0..n).map(|_| (0..t).map(|_| coord(0.3)).collect()).collect();
    let structural = (0..n).map(|_| (0..s).map(|_| coord(0.1)).collect()).collect();
    let query = (0..t).map(|_| coord(0.2)).collect();
    Instance { graph, text, structural, query }
}

pub fn build(inst: &Instance) -> EmbeddingIndex {
    let n = inst.text.len();
    let t = inst.text[0].len();
    let mut m = Matrix::zeros(n, NUMERIC_DIM + t);
    for r in 0..n {
        m.row_mut(r)[NUMERIC_DIM..].copy_from_slice(&inst.text[r]);
    }
    let feats = NodeFeatureMatrix {
        node_ids: inst.graph.nodes().iter().map(|n| n.id.clone()).collect(),
        encoder_id: "fixed".into(),
        matrix: m,
    };
    build_index(&inst.graph, &feats, &Matrix::from_rows(&inst.structural), &WalkConfig::default()).unwrap()
}

pub fn assert_same(got: &[(String, f64)], want: &[(String, f64)]) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert_eq!(g.0, w.0);
        assert!((g.1 - w.1).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&g.1));
    }
}
