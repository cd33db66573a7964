use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kgraph::KnowledgeGraph;
use crate::numkernel::{
    adam_step, bce_loss, dot, relu, relu_backward, sigmoid, xavier_uniform, AdamConfig,
    Checkpoint, Grads, Matrix, ParamStore, SparseRows,
};

use super::split::{EdgeSplit, NegativeSampler, Pair};
use super::{eval_link_prediction, DeepGraphError, LinkPredMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SageConfig {
    pub hidden: usize,
    pub out: usize,
    pub epochs: usize,
    pub lr: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for SageConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            out: 256,
            epochs: 100,
            lr: 0.01,
            threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val: LinkPredMetrics,
}

/// Two mean-aggregation layers; the second is linear so that inner products
/// of embeddings can take either sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SageModel {
    pub params: ParamStore,
    pub config: SageConfig,
}

struct Forward {
    c1: Matrix,
    pre1: Matrix,
    c2: Matrix,
    z: Matrix,
}

fn concat_agg(agg: &SparseRows, h: &Matrix) -> Matrix {
    h.hcat(&agg.apply(h)).expect("row counts agree")
}

fn forward(store: &ParamStore, agg: &SparseRows, x: &Matrix) -> Forward {
    let c1 = concat_agg(agg, x);
    forward_from(store, agg, c1)
}

fn forward_from(store: &ParamStore, agg: &SparseRows, c1: Matrix) -> Forward {
    let mut pre1 = c1.matmul(store.get("w1")).expect("w1 shape");
    pre1.add_row_broadcast(store.get("b1")).expect("b1 shape");
    let h1 = relu(&pre1);
    let c2 = concat_agg(agg, &h1);
    let mut z = c2.matmul(store.get("w2")).expect("w2 shape");
    z.add_row_broadcast(store.get("b2")).expect("b2 shape");
    Forward { c1, pre1, c2, z }
}

/// Inner-product logits for each pair.
pub(crate) fn pair_logits(z: &Matrix, pairs: &[Pair]) -> Vec<f64> {
    pairs.iter().map(|&(u, v)| dot(z.row(u), z.row(v))).collect()
}

/// Accumulates `∂L/∂z` from per-pair logit gradients.
pub(crate) fn pair_logits_backward(z: &Matrix, pairs: &[Pair], g: &[f64]) -> Matrix {
    let mut dz = Matrix::zeros(z.rows(), z.cols());
    for (&(u, v), &gi) in pairs.iter().zip(g) {
        if gi == 0.0 {
            continue;
        }
        let zv = z.row(v).to_vec();
        let zu = z.row(u).to_vec();
        for (d, x) in dz.row_mut(u).iter_mut().zip(&zv) {
            *d += gi * x;
        }
        for (d, x) in dz.row_mut(v).iter_mut().zip(&zu) {
            *d += gi * x;
        }
    }
    dz
}

pub(crate) fn labelled(pos: &[Pair], neg: &[Pair]) -> (Vec<Pair>, Matrix) {
    let pairs: Vec<Pair> = pos.iter().chain(neg).copied().collect();
    let labels: Vec<f64> = pos
        .iter()
        .map(|_| 1.0)
        .chain(neg.iter().map(|_| 0.0))
        .collect();
    (pairs, Matrix::row_vector(&labels))
}

fn objective_from(
    store: &ParamStore,
    agg: &SparseRows,
    c1: Matrix,
    pairs: &[Pair],
    labels: &Matrix,
) -> (f64, Grads) {
    let f = forward_from(store, agg, c1);
    let logits = Matrix::row_vector(&pair_logits(&f.z, pairs));
    let (loss, g) = bce_loss(&logits, labels).expect("label shape");
    let dz = pair_logits_backward(&f.z, pairs, g.data());
    let w2 = store.get("w2");
    let hidden = w2.rows() / 2;
    let mut grads = Grads::new();
    grads.insert("w2".into(), f.c2.matmul_tn(&dz).expect("shape"));
    grads.insert("b2".into(), dz.column_sums());
    let dc2 = dz.matmul_nt(w2).expect("shape");
    let (d_self, d_nb) = dc2.split_cols(hidden);
    let dh1 = d_self.add(&agg.apply_transpose(&d_nb)).expect("shape");
    let dpre1 = relu_backward(&dh1, &f.pre1).expect("shape");
    grads.insert("w1".into(), f.c1.matmul_tn(&dpre1).expect("shape"));
    grads.insert("b1".into(), dpre1.column_sums());
    (loss, grads)
}

/// Mean BCE over `pos ∪ neg` and its gradient, for training and gradient checks.
pub fn sage_objective(
    store: &ParamStore,
    agg: &SparseRows,
    x: &Matrix,
    pos: &[Pair],
    neg: &[Pair],
) -> (f64, Grads) {
    let (pairs, labels) = labelled(pos, neg);
    objective_from(store, agg, concat_agg(agg, x), &pairs, &labels)
}

impl SageModel {
    pub fn init(in_dim: usize, config: SageConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new(config.seed);
        params.insert("w1", xavier_uniform(2 * in_dim, config.hidden, &mut rng));
        params.insert("b1", Matrix::zeros(1, config.hidden));
        params.insert("w2", xavier_uniform(2 * config.hidden, config.out, &mut rng));
        params.insert("b2", Matrix::zeros(1, config.out));
        Self { params, config }
    }

    pub fn in_dim(&self) -> usize {
        self.params.get("w1").rows() / 2
    }

    /// Node embeddings with message passing over `pairs`.
    pub fn embed(&self, n: usize, pairs: &[Pair], x: &Matrix) -> Matrix {
        forward(&self.params, &SparseRows::mean_neighbors(n, pairs), x).z
    }

    pub fn score(z: &Matrix, u: usize, v: usize) -> f64 {
        sigmoid(dot(z.row(u), z.row(v)))
    }

    pub fn evaluate(&self, z: &Matrix, pos: &[Pair], neg: &[Pair]) -> Result<LinkPredMetrics, DeepGraphError> {
        let sp: Vec<f64> = pos.iter().map(|&(u, v)| Self::score(z, u, v)).collect();
        let sn: Vec<f64> = neg.iter().map(|&(u, v)| Self::score(z, u, v)).collect();
        eval_link_prediction(&sp, &sn, self.config.threshold)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = BTreeMap::new();
        meta.insert("model".into(), "sage".into());
        meta.insert("config".into(), serde_json::to_value(self.config).expect("config"));
        self.params.to_checkpoint(meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, DeepGraphError> {
        if ckpt.meta.get("model").and_then(|m| m.as_str()) != Some("sage") {
            return Err(DeepGraphError::InvalidConfig("checkpoint is not a sage model".into()));
        }
        let config = ckpt
            .meta
            .get("config")
            .and_then(|c| serde_json::from_value(c.clone()).ok())
            .unwrap_or_default();
        Ok(Self {
            params: ParamStore::from_checkpoint(ckpt)?,
            config,
        })
    }
}

/// Share of held-out positives `(u, v)` where `v` is among the three best
/// scored candidates for `u`. Candidates are type-compatible nodes other than
/// `u` and its training neighbours.
pub fn top3_accuracy(z: &Matrix, sampler: &NegativeSampler, train: &[Pair], pos: &[Pair]) -> f64 {
    if pos.is_empty() {
        return 0.0;
    }
    let mut known: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(a, b) in train {
        known.entry(a).or_default().insert(b);
        known.entry(b).or_default().insert(a);
    }
    let empty = BTreeSet::new();
    let hits = pos
        .iter()
        .filter(|&&(u, v)| {
            let target = dot(z.row(u), z.row(v));
            let nb = known.get(&u).unwrap_or(&empty);
            let better = (0..z.rows())
                .filter(|&w| w != u && w != v && !nb.contains(&w) && sampler.compatible(u, w))
                .filter(|&w| dot(z.row(u), z.row(w)) > target)
                .count();
            better < 3
        })
        .count();
    hits as f64 / pos.len() as f64
}

pub struct SageTraining {
    pub model: SageModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub test: LinkPredMetrics,
}

/// Full-batch supervised training; keeps the parameters of the epoch with the
/// best validation F1, AUC breaking ties and later epochs winning exact ties.
pub fn train_sage_supervised(
    graph: &KnowledgeGraph,
    x: &Matrix,
    split: &EdgeSplit,
    config: SageConfig,
) -> Result<SageTraining, DeepGraphError> {
    let n = graph.node_count();
    if x.rows() != n {
        return Err(DeepGraphError::FeatureMismatch { nodes: n, rows: x.rows() });
    }
    let sampler = &NegativeSampler::new(graph);
    let mut model = SageModel::init(x.cols(), config);
    let agg = SparseRows::mean_neighbors(n, &split.train_pos);
    let c1 = concat_agg(&agg, x);
    let (pairs, labels) = labelled(&split.train_pos, &split.train_neg);
    let adam = AdamConfig::with_lr(config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<((f64, f64), usize, ParamStore)> = None;
    for epoch in 1..=config.epochs {
        let (loss, grads) = objective_from(&model.params, &agg, c1.clone(), &pairs, &labels);
        if !loss.is_finite() {
            return Err(DeepGraphError::NonFiniteLoss { epoch, loss });
        }
        adam_step(&mut model.params, &grads, &adam)?;
        let z = forward_from(&model.params, &agg, c1.clone()).z;
        let mut val = model.evaluate(&z, &split.val_pos, &split.val_neg)?;
        val.top3_accuracy = Some(top3_accuracy(&z, sampler, &split.train_pos, &split.val_pos));
        let key = (val.f1, val.roc_auc);
        if best.as_ref().map_or(true, |(k, _, _)| key >= *k) {
            best = Some((key, epoch, model.params.clone()));
        }
        tracing::debug!(epoch, loss, f1 = val.f1, auc = val.roc_auc, "sage epoch");
        history.push(EpochRecord { epoch, loss, val });
    }
    let best_epoch = match best {
        Some((_, e, p)) => {
            model.params = p;
            e
        }
        None => 0,
    };
    let z = forward_from(&model.params, &agg, c1).z;
    let mut test = model.evaluate(&z, &split.test_pos, &split.test_neg)?;
    test.top3_accuracy = Some(top3_accuracy(&z, sampler, &split.train_pos, &split.test_pos));
    Ok(SageTraining {
        model,
        history,
        best_epoch,
        test,
    })
}
