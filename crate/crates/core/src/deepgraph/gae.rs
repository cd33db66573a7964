use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kgraph::KnowledgeGraph;
use crate::numkernel::{
    adam_step, bce_loss, relu, relu_backward, sigmoid, xavier_uniform, AdamConfig, Checkpoint,
    Grads, Matrix, ParamStore, SparseRows,
};

use super::sage::{labelled, EpochRecord};
use super::split::{split_edges, undirected_pairs, EdgeSplit, NegativeSampler, Pair, SplitRatios};
use super::{eval_link_prediction, DeepGraphError, LinkPredMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaeConfig {
    pub hidden: usize,
    pub latent: usize,
    pub decoder_hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub threshold: f64,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            latent: 128,
            decoder_hidden: 64,
            epochs: 100,
            lr: 0.01,
            threshold: 0.5,
            seed: 0,
            ratios: SplitRatios::default(),
        }
    }
}

/// Two-layer GCN encoder with an MLP decoder over concatenated pair embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct GaeModel {
    pub params: ParamStore,
    pub config: GaeConfig,
}

struct Encoded {
    pre1: Matrix,
    h1: Matrix,
    z: Matrix,
}

fn encode(store: &ParamStore, a: &SparseRows, ax: &Matrix) -> Encoded {
    let mut pre1 = ax.matmul(store.get("g1")).expect("g1 shape");
    pre1.add_row_broadcast(store.get("gb1")).expect("gb1 shape");
    let h1 = relu(&pre1);
    let mut z = a.apply(&h1.matmul(store.get("g2")).expect("g2 shape"));
    z.add_row_broadcast(store.get("gb2")).expect("gb2 shape");
    Encoded { pre1, h1, z }
}

struct Decoded {
    input: Matrix,
    pre: Matrix,
    hidden: Matrix,
    logits: Matrix,
}

fn pair_input(z: &Matrix, pairs: &[Pair]) -> Matrix {
    let us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let vs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    z.gather_rows(&us).hcat(&z.gather_rows(&vs)).expect("rows agree")
}

fn decode(store: &ParamStore, z: &Matrix, pairs: &[Pair]) -> Decoded {
    let input = pair_input(z, pairs);
    let mut pre = input.matmul(store.get("d1")).expect("d1 shape");
    pre.add_row_broadcast(store.get("db1")).expect("db1 shape");
    let hidden = relu(&pre);
    let mut logits = hidden.matmul(store.get("d2")).expect("d2 shape");
    logits.add_row_broadcast(store.get("db2")).expect("db2 shape");
    Decoded {
        input,
        pre,
        hidden,
        logits,
    }
}

fn objective_ax(
    store: &ParamStore,
    a: &SparseRows,
    ax: &Matrix,
    pairs: &[Pair],
    labels: &Matrix,
) -> (f64, Grads) {
    let enc = encode(store, a, ax);
    let dec = decode(store, &enc.z, pairs);
    let labels_col = Matrix::from_vec(labels.cols(), 1, labels.data().to_vec()).expect("labels");
    let (loss, dlogit) = bce_loss(&dec.logits, &labels_col).expect("label shape");
    let mut grads = Grads::new();
    grads.insert("d2".into(), dec.hidden.matmul_tn(&dlogit).expect("shape"));
    grads.insert("db2".into(), dlogit.column_sums());
    let dh = dlogit.matmul_nt(store.get("d2")).expect("shape");
    let dpre = relu_backward(&dh, &dec.pre).expect("shape");
    grads.insert("d1".into(), dec.input.matmul_tn(&dpre).expect("shape"));
    grads.insert("db1".into(), dpre.column_sums());
    let din = dpre.matmul_nt(store.get("d1")).expect("shape");
    let latent = enc.z.cols();
    let (du, dv) = din.split_cols(latent);
    let mut dz = Matrix::zeros(enc.z.rows(), latent);
    dz.scatter_add_rows(&pairs.iter().map(|p| p.0).collect::<Vec<_>>(), &du);
    dz.scatter_add_rows(&pairs.iter().map(|p| p.1).collect::<Vec<_>>(), &dv);
    grads.insert("gb2".into(), dz.column_sums());
    let dt = a.apply_transpose(&dz);
    grads.insert("g2".into(), enc.h1.matmul_tn(&dt).expect("shape"));
    let dh1 = dt.matmul_nt(store.get("g2")).expect("shape");
    let dpre1 = relu_backward(&dh1, &enc.pre1).expect("shape");
    grads.insert("g1".into(), ax.matmul_tn(&dpre1).expect("shape"));
    grads.insert("gb1".into(), dpre1.column_sums());
    (loss, grads)
}

/// Mean BCE of the decoder over `pos ∪ neg` and its gradient.
pub fn gae_objective(
    store: &ParamStore,
    a: &SparseRows,
    x: &Matrix,
    pos: &[Pair],
    neg: &[Pair],
) -> (f64, Grads) {
    let (pairs, labels) = labelled(pos, neg);
    objective_ax(store, a, &a.apply(x), &pairs, &labels)
}

impl GaeModel {
    pub fn init(in_dim: usize, config: GaeConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new(config.seed);
        params.insert("g1", xavier_uniform(in_dim, config.hidden, &mut rng));
        params.insert("gb1", Matrix::zeros(1, config.hidden));
        params.insert("g2", xavier_uniform(config.hidden, config.latent, &mut rng));
        params.insert("gb2", Matrix::zeros(1, config.latent));
        params.insert("d1", xavier_uniform(2 * config.latent, config.decoder_hidden, &mut rng));
        params.insert("db1", Matrix::zeros(1, config.decoder_hidden));
        params.insert("d2", xavier_uniform(config.decoder_hidden, 1, &mut rng));
        params.insert("db2", Matrix::zeros(1, 1));
        Self { params, config }
    }

    pub fn embed(&self, n: usize, pairs: &[Pair], x: &Matrix) -> Matrix {
        let a = SparseRows::gcn_normalized(n, pairs);
        encode(&self.params, &a, &a.apply(x)).z
    }

    pub fn scores(&self, z: &Matrix, pairs: &[Pair]) -> Vec<f64> {
        if pairs.is_empty() {
            return Vec::new();
        }
        decode(&self.params, z, pairs)
            .logits
            .data()
            .iter()
            .map(|&l| sigmoid(l))
            .collect()
    }

    pub fn evaluate(&self, z: &Matrix, pos: &[Pair], neg: &[Pair]) -> Result<LinkPredMetrics, DeepGraphError> {
        eval_link_prediction(&self.scores(z, pos), &self.scores(z, neg), self.config.threshold)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = BTreeMap::new();
        meta.insert("model".into(), "gae".into());
        meta.insert("config".into(), serde_json::to_value(self.config).expect("config"));
        self.params.to_checkpoint(meta)
    }
}

pub struct GaeTraining {
    pub model: GaeModel,
    pub split: EdgeSplit,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test: LinkPredMetrics,
}

/// Unsupervised adjacency reconstruction. Negatives are redrawn every epoch;
/// the parameters with the best validation AUC are kept.
pub fn train_gae(
    graph: &KnowledgeGraph,
    x: &Matrix,
    config: GaeConfig,
) -> Result<GaeTraining, DeepGraphError> {
    let n = graph.node_count();
    if x.rows() != n {
        return Err(DeepGraphError::FeatureMismatch { nodes: n, rows: x.rows() });
    }
    let split = split_edges(graph, config.ratios, 1.0, config.seed)?;
    let sampler = NegativeSampler::new(graph);
    let mut exclude: BTreeSet<Pair> = undirected_pairs(graph).into_iter().collect();
    exclude.extend(split.val_neg.iter().chain(&split.test_neg).copied());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6ae);
    let a = SparseRows::gcn_normalized(n, &split.train_pos);
    let ax = a.apply(x);
    let mut model = GaeModel::init(x.cols(), config);
    let adam = AdamConfig::with_lr(config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=config.epochs {
        let neg = sampler.sample(split.train_pos.len(), &exclude, &mut rng);
        let (pairs, labels) = labelled(&split.train_pos, &neg);
        let (loss, grads) = objective_ax(&model.params, &a, &ax, &pairs, &labels);
        if !loss.is_finite() {
            return Err(DeepGraphError::NonFiniteLoss { epoch, loss });
        }
        adam_step(&mut model.params, &grads, &adam)?;
        let z = encode(&model.params, &a, &ax).z;
        let val = model.evaluate(&z, &split.val_pos, &split.val_neg)?;
        if best.as_ref().map_or(true, |(k, _, _)| val.roc_auc >= *k) {
            best = Some((val.roc_auc, epoch, model.params.clone()));
        }
        tracing::debug!(epoch, loss, auc = val.roc_auc, "gae epoch");
        history.push(EpochRecord { epoch, loss, val });
    }
    let best_epoch = match best {
        Some((_, e, p)) => {
            model.params = p;
            e
        }
        None => 0,
    };
    let z = encode(&model.params, &a, &ax).z;
    let test = model.evaluate(&z, &split.test_pos, &split.test_neg)?;
    Ok(GaeTraining {
        model,
        split,
        history,
        best_epoch,
        test,
    })
}
