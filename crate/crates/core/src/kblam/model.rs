use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kgraph::KnowledgeGraph;
use crate::numkernel::{
    row_softmax, softmax_backward, xavier_uniform, Checkpoint, Grads, Mask, Matrix, ParamStore,
    MASK_SENTINEL,
};

use super::KblamError;

/// Deepest window accepted anywhere.
pub const MAX_HOPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KblamConfig {
    pub feature_dim: usize,
    pub text_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub score_hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub default_hops: usize,
    pub low_confidence: f64,
    pub seed: u64,
}

impl Default for KblamConfig {
    fn default() -> Self {
        Self {
            feature_dim: crate::featurize::FEATURE_DIM,
            text_dim: crate::featurize::TEXT_DIM,
            hidden: 256,
            heads: 4,
            head_dim: 64,
            score_hidden: 256,
            dropout: 0.1,
            epochs: 50,
            lr: 1e-3,
            batch_size: 32,
            default_hops: 3,
            low_confidence: 0.2,
            seed: 0,
        }
    }
}

impl KblamConfig {
    /// Width of the attended query vector (`heads × head_dim`).
    pub fn attn_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Width of the scoring head input.
    pub fn score_input(&self) -> usize {
        self.attn_dim() + self.hidden
    }

    pub fn validate(&self) -> Result<(), KblamError> {
        let dims = [self.feature_dim, self.text_dim, self.hidden, self.heads, self.head_dim, self.score_hidden];
        if dims.contains(&0) || self.batch_size == 0 {
            return Err(KblamError::InvalidConfig("dimensions and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(KblamError::InvalidConfig(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.default_hops > MAX_HOPS {
            return Err(KblamError::InvalidConfig(format!("default hops {} exceed {MAX_HOPS}", self.default_hops)));
        }
        Ok(())
    }
}

/// Nodes within `hops` of a center over the undirected view, in BFS order,
/// with neighbour lists restricted to the window (local indices).
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub center: usize,
    pub hops: usize,
    pub nodes: Vec<usize>,
    pub neighbors: Vec<Vec<usize>>,
}

impl Window {
    pub fn expand(graph: &KnowledgeGraph, center: &str, hops: usize) -> Result<Self, KblamError> {
        if hops > MAX_HOPS {
            return Err(KblamError::HopsTooDeep { hops, max: MAX_HOPS });
        }
        let c = graph
            .index_of(center)
            .ok_or_else(|| KblamError::UnknownCenter(center.to_string()))?;
        let nodes = graph.neighborhood(c, hops, None);
        let local: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let neighbors = nodes
            .iter()
            .map(|&g| {
                let mut ns: Vec<usize> = graph
                    .undirected_neighbors(g)
                    .into_iter()
                    .filter(|&u| u != g)
                    .filter_map(|u| local.get(&u).copied())
                    .collect();
                ns.sort_unstable();
                ns.dedup();
                ns
            })
            .collect();
        Ok(Self { center: c, hops, nodes, neighbors })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn local_of(&self, global: usize) -> Option<usize> {
        self.nodes.iter().position(|&g| g == global)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub node_ids: Vec<String>,
    /// One row per head over the window nodes.
    pub per_head: Vec<Vec<f64>>,
    pub averaged: Vec<f64>,
    pub top_nodes: Vec<String>,
}

/// Intermediate values of one window pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GnnCache {
    pub pre: Matrix,
    pub h: Matrix,
}

#[derive(Debug, Clone)]
pub(crate) struct AttnCache {
    pub q: Vec<f64>,
    pub k: Matrix,
    pub v: Matrix,
    /// heads × N
    pub weights: Matrix,
    pub concat: Vec<f64>,
    pub attended: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ScoreCache {
    pub input: Matrix,
    pub pre: Matrix,
    pub hidden: Matrix,
    pub keep: Option<Matrix>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KblamModel {
    pub params: ParamStore,
    pub config: KblamConfig,
}

impl KblamModel {
    pub fn init(config: KblamConfig) -> Result<Self, KblamError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new(config.seed);
        let (f, g, d, s) = (config.feature_dim, config.hidden, config.attn_dim(), config.score_hidden);
        // the 2F×G layer is stored as its self and neighbour halves
        let w = xavier_uniform(2 * f, g, &mut rng);
        params.insert("gnn_self", Matrix::from_vec(f, g, w.data()[..f * g].to_vec()).expect("shape"));
        params.insert("gnn_neigh", Matrix::from_vec(f, g, w.data()[f * g..].to_vec()).expect("shape"));
        params.insert("gnn_b", Matrix::zeros(1, g));
        params.insert("wq", xavier_uniform(config.text_dim, d, &mut rng));
        params.insert("wk", xavier_uniform(g, d, &mut rng));
        params.insert("wv", xavier_uniform(g, d, &mut rng));
        params.insert("wo", xavier_uniform(d, d, &mut rng));
        params.insert("s1", xavier_uniform(config.score_input(), s, &mut rng));
        params.insert("s1_b", Matrix::zeros(1, s));
        params.insert("s2", xavier_uniform(s, 1, &mut rng));
        params.insert("s2_b", Matrix::zeros(1, 1));
        Ok(Self { params, config })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = BTreeMap::new();
        meta.insert("model".into(), "kblam".into());
        meta.insert("config".into(), serde_json::to_value(self.config).expect("config"));
        self.params.to_checkpoint(meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, KblamError> {
        if ckpt.meta.get("model").and_then(|v| v.as_str()) != Some("kblam") {
            return Err(KblamError::InvalidConfig("checkpoint is not a kblam model".into()));
        }
        let config: KblamConfig = ckpt
            .meta
            .get("config")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| KblamError::InvalidConfig(e.to_string()))?
            .unwrap_or_default();
        Ok(Self { params: ParamStore::from_checkpoint(ckpt)?, config })
    }

    /// Node embeddings (window rows × hidden) for a window.
    pub fn encode_subgraph(&self, x: &Matrix, window: &Window) -> Matrix {
        let (ps, pn) = project_features(&self.params, x);
        gnn_forward(&self.params, &ps, &pn, window).h
    }

    pub fn rectangular_attention(
        &self,
        query: &[f64],
        nodes: &Matrix,
        mask: &[bool],
    ) -> Result<(Vec<f64>, Matrix), KblamError> {
        let c = attention_forward(&self.params, &self.config, query, nodes, mask)?;
        Ok((c.attended, c.weights))
    }

    /// Raw scores; masked entries are the sentinel. Dropout is off.
    pub fn score_nodes(&self, attended: &[f64], nodes: &Matrix, mask: &[bool]) -> Vec<f64> {
        score_forward(&self.params, attended, nodes, mask, None).scores
    }
}

/// `X·W_self` and `X·W_neigh` for the whole graph.
pub(crate) fn project_features(store: &ParamStore, x: &Matrix) -> (Matrix, Matrix) {
    (
        x.matmul(store.get("gnn_self")).expect("feature width"),
        x.matmul(store.get("gnn_neigh")).expect("feature width"),
    )
}

pub(crate) fn gnn_forward(store: &ParamStore, ps: &Matrix, pn: &Matrix, window: &Window) -> GnnCache {
    let g = ps.cols();
    let b = store.get("gnn_b").row(0);
    let mut pre = Matrix::zeros(window.len(), g);
    for (l, &gi) in window.nodes.iter().enumerate() {
        let row = pre.row_mut(l);
        row.copy_from_slice(ps.row(gi));
        let ns = &window.neighbors[l];
        if ns.is_empty() {
            for (r, v) in row.iter_mut().zip(pn.row(gi)) {
                *r += v;
            }
        } else {
            let inv = 1.0 / ns.len() as f64;
            for &nl in ns {
                for (r, v) in row.iter_mut().zip(pn.row(window.nodes[nl])) {
                    *r += v * inv;
                }
            }
        }
        for (r, bb) in row.iter_mut().zip(b) {
            *r += bb;
        }
    }
    let h = pre.map(|v| v.max(0.0));
    GnnCache { pre, h }
}

/// Accumulates the window gradient into local-row gradients for the self
/// and neighbour projections; returns them with the bias gradient.
pub(crate) fn gnn_backward(cache: &GnnCache, window: &Window, dh: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
    let (n, g) = dh.shape();
    let mut dpre = Matrix::zeros(n, g);
    for ((d, &gr), &p) in dpre.data_mut().iter_mut().zip(dh.data()).zip(cache.pre.data()) {
        *d = if p > 0.0 { gr } else { 0.0 };
    }
    let mut db = vec![0.0; g];
    let mut dneigh = Matrix::zeros(n, g);
    for l in 0..n {
        let row = dpre.row(l).to_vec();
        for (a, v) in db.iter_mut().zip(&row) {
            *a += v;
        }
        let ns = &window.neighbors[l];
        if ns.is_empty() {
            for (a, v) in dneigh.row_mut(l).iter_mut().zip(&row) {
                *a += v;
            }
        } else {
            let inv = 1.0 / ns.len() as f64;
            for &nl in ns {
                for (a, v) in dneigh.row_mut(nl).iter_mut().zip(&row) {
                    *a += v * inv;
                }
            }
        }
    }
    (dpre, dneigh, db)
}

pub(crate) fn attention_forward(
    store: &ParamStore,
    cfg: &KblamConfig,
    query: &[f64],
    nodes: &Matrix,
    mask: &[bool],
) -> Result<AttnCache, KblamError> {
    let n = nodes.rows();
    if mask.len() != n {
        return Err(KblamError::InvalidConfig(format!("mask has {} entries for {n} nodes", mask.len())));
    }
    let q = Matrix::row_vector(query).matmul(store.get("wq")).map_err(KblamError::Kernel)?.into_data();
    let k = nodes.matmul(store.get("wk")).map_err(KblamError::Kernel)?;
    let v = nodes.matmul(store.get("wv")).map_err(KblamError::Kernel)?;
    let (heads, hd) = (cfg.heads, cfg.head_dim);
    let scale = 1.0 / (hd as f64).sqrt();
    let mut logits = Matrix::zeros(heads, n);
    for h in 0..heads {
        let qh = &q[h * hd..(h + 1) * hd];
        for i in 0..n {
            let kh = &k.row(i)[h * hd..(h + 1) * hd];
            logits.set(h, i, qh.iter().zip(kh).map(|(a, b)| a * b).sum::<f64>() * scale);
        }
    }
    let full_mask = Mask::new(heads, n, (0..heads).flat_map(|_| mask.iter().copied()).collect());
    let weights = row_softmax(&logits, Some(&full_mask)).map_err(|_| KblamError::AllMaskedRow)?;
    let mut concat = vec![0.0; heads * hd];
    for h in 0..heads {
        for i in 0..n {
            let w = weights.get(h, i);
            if w == 0.0 {
                continue;
            }
            let vh = &v.row(i)[h * hd..(h + 1) * hd];
            for (c, x) in concat[h * hd..(h + 1) * hd].iter_mut().zip(vh) {
                *c += w * x;
            }
        }
    }
    let attended = Matrix::row_vector(&concat).matmul(store.get("wo")).map_err(KblamError::Kernel)?.into_data();
    Ok(AttnCache { q, k, v, weights, concat, attended })
}

/// Returns (dquery_proj rows for wq, dnodes) and adds weight gradients.
pub(crate) fn attention_backward(
    store: &ParamStore,
    cfg: &KblamConfig,
    query: &[f64],
    nodes: &Matrix,
    cache: &AttnCache,
    dattended: &[f64],
    grads: &mut Grads,
) -> Matrix {
    let n = nodes.rows();
    let (heads, hd) = (cfg.heads, cfg.head_dim);
    let scale = 1.0 / (hd as f64).sqrt();
    let dat = Matrix::row_vector(dattended);
    add_grad(grads, "wo", Matrix::row_vector(&cache.concat).matmul_tn(&dat).expect("shape"));
    let dconcat = dat.matmul_nt(store.get("wo")).expect("shape").into_data();
    let mut dv = Matrix::zeros(n, heads * hd);
    let mut dk = Matrix::zeros(n, heads * hd);
    let mut dq = vec![0.0; heads * hd];
    let mut dw = Matrix::zeros(heads, n);
    for h in 0..heads {
        let doh = &dconcat[h * hd..(h + 1) * hd];
        for i in 0..n {
            let w = cache.weights.get(h, i);
            let vh = &cache.v.row(i)[h * hd..(h + 1) * hd];
            dw.set(h, i, doh.iter().zip(vh).map(|(a, b)| a * b).sum());
            for (d, g) in dv.row_mut(i)[h * hd..(h + 1) * hd].iter_mut().zip(doh) {
                *d += w * g;
            }
        }
    }
    let dlogits = softmax_backward(&cache.weights, &dw).expect("shape");
    for h in 0..heads {
        let qh = &cache.q[h * hd..(h + 1) * hd];
        for i in 0..n {
            let dl = dlogits.get(h, i) * scale;
            if dl == 0.0 {
                continue;
            }
            let kh = cache.k.row(i)[h * hd..(h + 1) * hd].to_vec();
            for (d, x) in dq[h * hd..(h + 1) * hd].iter_mut().zip(&kh) {
                *d += dl * x;
            }
            for (d, x) in dk.row_mut(i)[h * hd..(h + 1) * hd].iter_mut().zip(qh) {
                *d += dl * x;
            }
        }
    }
    let dqm = Matrix::row_vector(&dq);
    add_grad(grads, "wq", Matrix::row_vector(query).matmul_tn(&dqm).expect("shape"));
    add_grad(grads, "wk", nodes.matmul_tn(&dk).expect("shape"));
    add_grad(grads, "wv", nodes.matmul_tn(&dv).expect("shape"));
    let mut dnodes = dk.matmul_nt(store.get("wk")).expect("shape");
    dnodes.add_assign(&dv.matmul_nt(store.get("wv")).expect("shape")).expect("shape");
    dnodes
}

/// Inverted-dropout keep mask (entries 0 or 1/(1−p)).
pub(crate) fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

pub(crate) fn score_forward(
    store: &ParamStore,
    attended: &[f64],
    nodes: &Matrix,
    mask: &[bool],
    keep: Option<Matrix>,
) -> ScoreCache {
    let n = nodes.rows();
    let d = attended.len();
    let g = nodes.cols();
    let mut input = Matrix::zeros(n, d + g);
    for i in 0..n {
        let row = input.row_mut(i);
        row[..d].copy_from_slice(attended);
        row[d..].copy_from_slice(nodes.row(i));
    }
    let mut pre = input.matmul(store.get("s1")).expect("score input width");
    pre.add_row_broadcast(store.get("s1_b")).expect("shape");
    let mut hidden = pre.map(|v| v.max(0.0));
    if let Some(k) = &keep {
        hidden = hidden.hadamard(k).expect("shape");
    }
    let out = hidden.matmul(store.get("s2")).expect("shape");
    let b2 = store.get("s2_b").get(0, 0);
    let scores = (0..n)
        .map(|i| if mask[i] { out.get(i, 0) + b2 } else { MASK_SENTINEL })
        .collect();
    ScoreCache { input, pre, hidden, keep, scores }
}

/// Returns (dattended, dnodes) given gradients on the raw scores.
pub(crate) fn score_backward(
    store: &ParamStore,
    cache: &ScoreCache,
    dscores: &[f64],
    attn_dim: usize,
    grads: &mut Grads,
) -> (Vec<f64>, Matrix) {
    let n = dscores.len();
    let ds = Matrix::from_vec(n, 1, dscores.to_vec()).expect("shape");
    add_grad(grads, "s2", cache.hidden.matmul_tn(&ds).expect("shape"));
    add_grad(grads, "s2_b", Matrix::filled(1, 1, dscores.iter().sum()));
    let mut dh = ds.matmul_nt(store.get("s2")).expect("shape");
    if let Some(k) = &cache.keep {
        dh = dh.hadamard(k).expect("shape");
    }
    for (d, &p) in dh.data_mut().iter_mut().zip(cache.pre.data()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    add_grad(grads, "s1", cache.input.matmul_tn(&dh).expect("shape"));
    add_grad(grads, "s1_b", dh.column_sums());
    let dinput = dh.matmul_nt(store.get("s1")).expect("shape");
    let mut dattended = vec![0.0; attn_dim];
    let g = dinput.cols() - attn_dim;
    let mut dnodes = Matrix::zeros(n, g);
    for i in 0..n {
        let row = dinput.row(i);
        for (a, v) in dattended.iter_mut().zip(&row[..attn_dim]) {
            *a += v;
        }
        dnodes.row_mut(i).copy_from_slice(&row[attn_dim..]);
    }
    (dattended, dnodes)
}

pub(crate) fn add_grad(grads: &mut Grads, name: &str, g: Matrix) {
    match grads.get_mut(name) {
        Some(existing) => existing.add_assign(&g).expect("gradient shape"),
        None => {
            grads.insert(name.to_string(), g);
        }
    }
}
