use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featurize::{encode_text, NodeFeatureMatrix, TextEncoder};
use crate::kgraph::KnowledgeGraph;
use crate::numkernel::{adam_step, softmax_cross_entropy, AdamConfig, Grads, Matrix, ParamStore};

use super::dataset::{QaDataset, QaSample};
use super::model::{
    add_grad, attention_backward, attention_forward, dropout_mask, gnn_backward, gnn_forward,
    project_features, score_backward, score_forward, KblamConfig, KblamModel, Window,
};
use super::KblamError;

/// A sample resolved against a graph: its window, one query vector per
/// phrasing, and answer positions inside the window.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub window: Window,
    pub queries: Vec<Vec<f64>>,
    pub answers: Vec<usize>,
}

impl PreparedSample {
    pub fn new(graph: &KnowledgeGraph, sample: &QaSample, encoder: &dyn TextEncoder) -> Result<Self, KblamError> {
        let window = Window::expand(graph, &sample.window.center, sample.window.hops)?;
        let mut answers = Vec::new();
        let mut outside = Vec::new();
        for id in &sample.answers {
            match graph.index_of(id).and_then(|g| window.local_of(g)) {
                Some(l) => answers.push(l),
                None => outside.push(id.clone()),
            }
        }
        if !outside.is_empty() {
            return Err(KblamError::OutsideWindow { question: sample.question.clone(), ids: outside });
        }
        let queries = std::iter::once(&sample.question)
            .chain(&sample.paraphrases)
            .map(|q| encode_text(encoder, q))
            .collect();
        Ok(Self { window, queries, answers })
    }
}

/// Mean cross-entropy over `batch` (sample, phrasing index) and its
/// gradient. `dropout_seed` enables training-mode dropout.
pub fn kblam_objective(
    store: &ParamStore,
    cfg: &KblamConfig,
    x: &Matrix,
    batch: &[(&PreparedSample, usize)],
    dropout_seed: Option<u64>,
) -> Result<(f64, Grads), KblamError> {
    if batch.is_empty() {
        return Err(KblamError::EmptyDataset);
    }
    let (ps, pn) = project_features(store, x);
    let inv = 1.0 / batch.len() as f64;
    let per_sample: Vec<Result<SampleGrad, KblamError>> = batch
        .par_iter()
        .enumerate()
        .map(|(idx, &(sample, view))| {
            let query = &sample.queries[view % sample.queries.len()];
            let n = sample.window.len();
            let gnn = gnn_forward(store, &ps, &pn, &sample.window);
            let valid = vec![true; n];
            let attn = attention_forward(store, cfg, query, &gnn.h, &valid)?;
            let keep = match dropout_seed {
                Some(seed) if cfg.dropout > 0.0 => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                    Some(dropout_mask(n, cfg.score_hidden, cfg.dropout, &mut rng))
                }
                _ => None,
            };
            let sc = score_forward(store, &attn.attended, &gnn.h, &valid, keep);
            let (loss, _, dscores) = softmax_cross_entropy(&sc.scores, &valid, &sample.answers)?;
            let dscores: Vec<f64> = dscores.iter().map(|g| g * inv).collect();
            let mut grads = Grads::new();
            let (datt, mut dh) = score_backward(store, &sc, &dscores, cfg.attn_dim(), &mut grads);
            let dh2 = attention_backward(store, cfg, query, &gnn.h, &attn, &datt, &mut grads);
            dh.add_assign(&dh2).expect("shape");
            let (dself, dneigh, db) = gnn_backward(&gnn, &sample.window, &dh);
            add_grad(&mut grads, "gnn_b", Matrix::row_vector(&db));
            Ok(SampleGrad { loss: loss * inv, grads, dself, dneigh })
        })
        .collect();
    let mut total = 0.0;
    let mut grads = Grads::new();
    let mut dps = Matrix::zeros(ps.rows(), ps.cols());
    let mut dpn = Matrix::zeros(pn.rows(), pn.cols());
    for (r, &(sample, _)) in per_sample.into_iter().zip(batch) {
        let r = r?;
        total += r.loss;
        for (name, g) in r.grads {
            add_grad(&mut grads, &name, g);
        }
        dps.scatter_add_rows(&sample.window.nodes, &r.dself);
        dpn.scatter_add_rows(&sample.window.nodes, &r.dneigh);
    }
    add_grad(&mut grads, "gnn_self", x.matmul_tn(&dps).expect("shape"));
    add_grad(&mut grads, "gnn_neigh", x.matmul_tn(&dpn).expect("shape"));
    Ok((total, grads))
}

struct SampleGrad {
    loss: f64,
    grads: Grads,
    dself: Matrix,
    dneigh: Matrix,
}

/// Window-softmax probabilities for one query (inference mode).
pub fn predict(model: &KblamModel, x: &Matrix, window: &Window, query: &[f64]) -> Result<Prediction, KblamError> {
    let (ps, pn) = project_features(&model.params, x);
    predict_projected(model, &ps, &pn, window, query)
}

fn predict_projected(
    model: &KblamModel,
    ps: &Matrix,
    pn: &Matrix,
    window: &Window,
    query: &[f64],
) -> Result<Prediction, KblamError> {
    if window.is_empty() {
        return Err(KblamError::AllMaskedRow);
    }
    let gnn = gnn_forward(&model.params, ps, pn, window);
    let valid = vec![true; window.len()];
    let attn = attention_forward(&model.params, &model.config, query, &gnn.h, &valid)?;
    let sc = score_forward(&model.params, &attn.attended, &gnn.h, &valid, None);
    let probs = crate::numkernel::row_softmax(&Matrix::row_vector(&sc.scores), None)?.into_data();
    Ok(Prediction { scores: sc.scores, probs, attention: attn.weights })
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    /// heads × window
    pub attention: Matrix,
}

impl Prediction {
    /// Local indices by probability, ties broken by node id.
    pub fn ranking(&self, graph: &KnowledgeGraph, window: &Window) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| {
            self.probs[b]
                .total_cmp(&self.probs[a])
                .then_with(|| graph.node_at(window.nodes[a]).id.cmp(&graph.node_at(window.nodes[b]).id))
        });
        order
    }

    /// Nodes whose probability is at least half the maximum.
    pub fn predicted_set(&self) -> Vec<usize> {
        let max = self.probs.iter().copied().fold(0.0, f64::max);
        (0..self.probs.len()).filter(|&i| self.probs[i] >= max / 2.0).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QaMetrics {
    pub samples: usize,
    pub top1: f64,
    pub top3: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mrr: f64,
}

/// Per-sample hit, overlap and reciprocal-rank figures, averaged.
pub fn evaluate(
    model: &KblamModel,
    graph: &KnowledgeGraph,
    x: &Matrix,
    samples: &[PreparedSample],
) -> Result<QaMetrics, KblamError> {
    if samples.is_empty() {
        return Ok(QaMetrics::default());
    }
    let (ps, pn) = project_features(&model.params, x);
    let rows: Vec<Result<[f64; 6], KblamError>> = samples
        .par_iter()
        .map(|s| {
            let p = predict_projected(model, &ps, &pn, &s.window, &s.queries[0])?;
            let ranking = p.ranking(graph, &s.window);
            let is_answer = |i: &usize| s.answers.contains(i);
            let top1 = f64::from(u8::from(ranking.first().is_some_and(is_answer)));
            let top3 = f64::from(u8::from(ranking.iter().take(3).any(is_answer)));
            let rr = ranking.iter().position(is_answer).map_or(0.0, |r| 1.0 / (r + 1) as f64);
            let pred = p.predicted_set();
            let hits = pred.iter().filter(|i| is_answer(i)).count() as f64;
            let precision = hits / pred.len().max(1) as f64;
            let recall = hits / s.answers.len() as f64;
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            Ok([top1, top3, precision, recall, f1, rr])
        })
        .collect();
    let mut acc = [0.0; 6];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r?) {
            *a += v;
        }
    }
    let n = samples.len() as f64;
    Ok(QaMetrics {
        samples: samples.len(),
        top1: acc[0] / n,
        top3: acc[1] / n,
        precision: acc[2] / n,
        recall: acc[3] / n,
        f1: acc[4] / n,
        mrr: acc[5] / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KblamEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val: QaMetrics,
}

#[derive(Debug, Clone)]
pub struct KblamTraining {
    pub model: KblamModel,
    pub history: Vec<KblamEpoch>,
    pub best_epoch: usize,
    pub best: QaMetrics,
}

pub fn prepare_all(
    graph: &KnowledgeGraph,
    samples: &[QaSample],
    encoder: &dyn TextEncoder,
) -> Result<Vec<PreparedSample>, KblamError> {
    samples.iter().map(|s| PreparedSample::new(graph, s, encoder)).collect()
}

/// Mini-batch Adam over the training split. Phrasings rotate per epoch.
/// Keeps the parameters of the epoch with the best validation top-1
/// (then top-3, then MRR; later epochs win exact ties). Without a
/// validation split the last epoch is kept.
pub fn train_kblam(
    graph: &KnowledgeGraph,
    features: &NodeFeatureMatrix,
    dataset: &QaDataset,
    encoder: &dyn TextEncoder,
    config: KblamConfig,
    mut on_epoch: impl FnMut(&KblamEpoch),
) -> Result<KblamTraining, KblamError> {
    if dataset.train.is_empty() {
        return Err(KblamError::EmptyDataset);
    }
    let x = &features.matrix;
    if x.rows() != graph.node_count() || x.cols() != config.feature_dim {
        return Err(KblamError::InvalidConfig(format!(
            "features are {}×{}, expected {}×{}",
            x.rows(),
            x.cols(),
            graph.node_count(),
            config.feature_dim
        )));
    }
    let train = prepare_all(graph, &dataset.train, encoder)?;
    let val = prepare_all(graph, &dataset.val, encoder)?;
    let mut model = KblamModel::init(config)?;
    let adam = AdamConfig::with_lr(config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<((f64, f64, f64), usize, ParamStore, QaMetrics)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&PreparedSample, usize)> = chunk.iter().map(|&i| (&train[i], epoch - 1 + i)).collect();
            let seed: u64 = rng.gen();
            let (loss, grads) = kblam_objective(&model.params, &config, x, &batch, Some(seed))?;
            if !loss.is_finite() {
                return Err(KblamError::NonFiniteLoss { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut model.params, &grads, &adam)?;
        }
        let val_metrics = evaluate(&model, graph, x, &val)?;
        let record = KblamEpoch { epoch, loss: loss_sum / train.len() as f64, val: val_metrics };
        on_epoch(&record);
        history.push(record);
        let key = (val_metrics.top1, val_metrics.top3, val_metrics.mrr);
        if val.is_empty() || best.as_ref().is_none_or(|b| key >= b.0) {
            best = Some((key, epoch, model.params.clone(), val_metrics));
        }
    }
    match best {
        Some((_, best_epoch, params, best_metrics)) => {
            model.params = params;
            Ok(KblamTraining { model, history, best_epoch, best: best_metrics })
        }
        None => {
            let best = evaluate(&model, graph, x, &val)?;
            Ok(KblamTraining { model, history, best_epoch: 0, best })
        }
    }
}
