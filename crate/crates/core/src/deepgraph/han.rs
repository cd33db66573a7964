use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kgraph::{EdgeType, KnowledgeGraph, NodeType};
use crate::numkernel::{
    adam_step, bce_loss, cosine, dot, leaky_relu, sigmoid, xavier_uniform, AdamConfig, Checkpoint,
    Grads, Matrix, ParamStore,
};

use super::split::{undirected_pairs, Pair};
use super::DeepGraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HanLoss {
    Contrastive,
    Infonce,
}

impl std::str::FromStr for HanLoss {
    type Err = DeepGraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "contrastive" => Ok(Self::Contrastive),
            "infonce" => Ok(Self::Infonce),
            other => Err(DeepGraphError::InvalidConfig(format!("unknown HAN loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HanConfig {
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub lr: f64,
    pub loss: HanLoss,
    pub negatives: usize,
    pub tau: f64,
    pub slope: f64,
    /// Positive edges drawn per InfoNCE epoch.
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for HanConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            latent: 64,
            epochs: 100,
            lr: 0.005,
            loss: HanLoss::Contrastive,
            negatives: 16,
            tau: 0.2,
            slope: 0.2,
            max_pairs: 2048,
            seed: 0,
        }
    }
}

/// Per-edge-type neighbourhoods (self included) and node-type groups.
#[derive(Debug, Clone)]
pub struct HanGraph {
    n: usize,
    channels: Vec<(EdgeType, Vec<Vec<usize>>)>,
    /// (node type, member nodes, channel indices incident to that type)
    groups: Vec<(NodeType, Vec<usize>, Vec<usize>)>,
    group_of: Vec<usize>,
}

impl HanGraph {
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let n = graph.node_count();
        let mut per_type: BTreeMap<EdgeType, Vec<BTreeSet<usize>>> = BTreeMap::new();
        for e in graph.edges() {
            let (u, v) = (graph.index_of(&e.src).unwrap(), graph.index_of(&e.dst).unwrap());
            let adj = per_type.entry(e.edge_type).or_insert_with(|| vec![BTreeSet::new(); n]);
            adj[u].insert(v);
            adj[v].insert(u);
        }
        let mut type_channels: BTreeMap<NodeType, BTreeSet<usize>> = BTreeMap::new();
        let mut channels = Vec::new();
        for (ci, (t, adj)) in per_type.into_iter().enumerate() {
            let lists = adj
                .into_iter()
                .enumerate()
                .map(|(v, mut s)| {
                    if !s.is_empty() {
                        type_channels.entry(graph.node_at(v).node_type).or_default().insert(ci);
                    }
                    s.insert(v);
                    s.into_iter().collect()
                })
                .collect();
            channels.push((t, lists));
        }
        let mut members: BTreeMap<NodeType, Vec<usize>> = BTreeMap::new();
        for (i, node) in graph.nodes().iter().enumerate() {
            members.entry(node.node_type).or_default().push(i);
        }
        let mut group_of = vec![0; n];
        let groups = members
            .into_iter()
            .enumerate()
            .map(|(gi, (t, nodes))| {
                for &v in &nodes {
                    group_of[v] = gi;
                }
                let chans = type_channels.remove(&t).unwrap_or_default().into_iter().collect();
                (t, nodes, chans)
            })
            .collect();
        Self {
            n,
            channels,
            groups,
            group_of,
        }
    }

    pub fn edge_types(&self) -> Vec<EdgeType> {
        self.channels.iter().map(|c| c.0).collect()
    }

    pub fn node_type_count(&self) -> usize {
        self.groups.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.group_of
    }
}

fn pname(prefix: &str, t: EdgeType) -> String {
    format!("{prefix}:{}", t.as_str())
}

struct ChannelCache {
    p: Matrix,
    pre: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    h: Matrix,
}

struct Cache {
    channels: Vec<ChannelCache>,
    /// per group: (tanh activations per channel, beta)
    semantic: Vec<(Vec<Matrix>, Vec<f64>)>,
    fused: Matrix,
    z: Matrix,
}

fn forward(store: &ParamStore, hg: &HanGraph, x: &Matrix, slope: f64) -> Cache {
    let hidden = store.get("ws").rows();
    let mut channels = Vec::with_capacity(hg.channels.len());
    for (t, nbrs) in &hg.channels {
        let p = x.matmul(store.get(&pname("w", *t))).expect("w shape");
        let a_src = store.get(&pname("a_src", *t)).data().to_vec();
        let a_dst = store.get(&pname("a_dst", *t)).data().to_vec();
        let src: Vec<f64> = (0..hg.n).map(|u| dot(p.row(u), &a_src)).collect();
        let dst: Vec<f64> = (0..hg.n).map(|v| dot(p.row(v), &a_dst)).collect();
        let mut h = Matrix::zeros(hg.n, hidden);
        let mut pres = Vec::with_capacity(hg.n);
        let mut alphas = Vec::with_capacity(hg.n);
        for v in 0..hg.n {
            let pre: Vec<f64> = nbrs[v].iter().map(|&u| dst[v] + src[u]).collect();
            let e: Vec<f64> = pre.iter().map(|&s| leaky_relu(s, slope)).collect();
            let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = e.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = ex.iter().sum();
            let alpha: Vec<f64> = ex.iter().map(|s| s / total).collect();
            let row = h.row_mut(v);
            for (&u, &a) in nbrs[v].iter().zip(&alpha) {
                for (o, &pu) in row.iter_mut().zip(p.row(u)) {
                    *o += a * pu;
                }
            }
            pres.push(pre);
            alphas.push(alpha);
        }
        channels.push(ChannelCache {
            p,
            pre: pres,
            alpha: alphas,
            h,
        });
    }

    let ws = store.get("ws");
    let bs = store.get("bs");
    let q = store.get("q").data().to_vec();
    let mut fused = Matrix::zeros(hg.n, hidden);
    let mut semantic = Vec::with_capacity(hg.groups.len());
    for (_, nodes, chans) in &hg.groups {
        let mut acts = Vec::with_capacity(chans.len());
        let mut w = Vec::with_capacity(chans.len());
        for &c in chans {
            let hr = channels[c].h.gather_rows(nodes);
            let mut u = hr.matmul(ws).expect("ws shape");
            u.add_row_broadcast(bs).expect("bs shape");
            let act = u.map(f64::tanh);
            let score = (0..nodes.len()).map(|i| dot(act.row(i), &q)).sum::<f64>() / nodes.len() as f64;
            w.push(score);
            acts.push(act);
        }
        let beta = softmax(&w);
        for (&c, &b) in chans.iter().zip(&beta) {
            for &v in nodes {
                let src = channels[c].h.row(v).to_vec();
                for (o, s) in fused.row_mut(v).iter_mut().zip(src) {
                    *o += b * s;
                }
            }
        }
        semantic.push((acts, beta));
    }
    let mut z = fused.matmul(store.get("proj")).expect("proj shape");
    z.add_row_broadcast(store.get("bproj")).expect("bproj shape");
    Cache {
        channels,
        semantic,
        fused,
        z,
    }
}

fn softmax(w: &[f64]) -> Vec<f64> {
    if w.is_empty() {
        return Vec::new();
    }
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = w.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = ex.iter().sum();
    ex.into_iter().map(|e| e / total).collect()
}

fn add_grad(grads: &mut Grads, name: String, g: Matrix) {
    match grads.get_mut(&name) {
        Some(existing) => existing.add_assign(&g).expect("grad shape"),
        None => {
            grads.insert(name, g);
        }
    }
}

fn backward(
    store: &ParamStore,
    hg: &HanGraph,
    x: &Matrix,
    cache: &Cache,
    dz: &Matrix,
    slope: f64,
    grads: &mut Grads,
) {
    add_grad(grads, "proj".into(), cache.fused.matmul_tn(dz).expect("shape"));
    add_grad(grads, "bproj".into(), dz.column_sums());
    let dfused = dz.matmul_nt(store.get("proj")).expect("shape");
    let hidden = store.get("ws").rows();
    let ws = store.get("ws");
    let q = store.get("q").data().to_vec();

    let mut dh: Vec<Matrix> = hg.channels.iter().map(|_| Matrix::zeros(hg.n, hidden)).collect();
    let mut dws = Matrix::zeros(hidden, hidden);
    let mut dbs = Matrix::zeros(1, hidden);
    let mut dq = vec![0.0; hidden];
    for ((_, nodes, chans), (acts, beta)) in hg.groups.iter().zip(&cache.semantic) {
        if chans.is_empty() {
            continue;
        }
        let mut dbeta = vec![0.0; chans.len()];
        for (k, &c) in chans.iter().enumerate() {
            for &v in nodes {
                let df = dfused.row(v);
                dbeta[k] += dot(df, cache.channels[c].h.row(v));
                for (d, &g) in dh[c].row_mut(v).iter_mut().zip(df) {
                    *d += beta[k] * g;
                }
            }
        }
        let inner: f64 = beta.iter().zip(&dbeta).map(|(b, d)| b * d).sum();
        let inv = 1.0 / nodes.len() as f64;
        for (k, &c) in chans.iter().enumerate() {
            let dw = beta[k] * (dbeta[k] - inner);
            if dw == 0.0 {
                continue;
            }
            let act = &acts[k];
            let mut du = Matrix::zeros(nodes.len(), hidden);
            for i in 0..nodes.len() {
                for ((d, &a), (dqj, &qj)) in du
                    .row_mut(i)
                    .iter_mut()
                    .zip(act.row(i))
                    .zip(dq.iter_mut().zip(&q))
                {
                    *dqj += dw * inv * a;
                    *d = dw * inv * qj * (1.0 - a * a);
                }
            }
            let hr = cache.channels[c].h.gather_rows(nodes);
            dws.add_assign(&hr.matmul_tn(&du).expect("shape")).expect("shape");
            dbs.add_assign(&du.column_sums()).expect("shape");
            let dhr = du.matmul_nt(ws).expect("shape");
            dh[c].scatter_add_rows(nodes, &dhr);
        }
    }
    add_grad(grads, "ws".into(), dws);
    add_grad(grads, "bs".into(), dbs);
    add_grad(grads, "q".into(), Matrix::from_vec(hidden, 1, dq).expect("q"));

    for ((t, nbrs), (cc, dhc)) in hg.channels.iter().zip(cache.channels.iter().zip(&dh)) {
        let a_src = store.get(&pname("a_src", *t)).data().to_vec();
        let a_dst = store.get(&pname("a_dst", *t)).data().to_vec();
        let mut dp = Matrix::zeros(hg.n, hidden);
        let mut da_src = vec![0.0; hidden];
        let mut da_dst = vec![0.0; hidden];
        for v in 0..hg.n {
            let g = dhc.row(v);
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let alpha = &cc.alpha[v];
            let dalpha: Vec<f64> = nbrs[v].iter().map(|&u| dot(g, cc.p.row(u))).collect();
            let inner: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
            let g = g.to_vec();
            for (k, &u) in nbrs[v].iter().enumerate() {
                for (d, &gi) in dp.row_mut(u).iter_mut().zip(&g) {
                    *d += alpha[k] * gi;
                }
                let de = alpha[k] * (dalpha[k] - inner);
                let dpre = if cc.pre[v][k] > 0.0 { de } else { slope * de };
                if dpre == 0.0 {
                    continue;
                }
                let pu = cc.p.row(u).to_vec();
                let pv = cc.p.row(v).to_vec();
                for j in 0..hidden {
                    da_src[j] += dpre * pu[j];
                    da_dst[j] += dpre * pv[j];
                }
                for (d, &a) in dp.row_mut(u).iter_mut().zip(&a_src) {
                    *d += dpre * a;
                }
                for (d, &a) in dp.row_mut(v).iter_mut().zip(&a_dst) {
                    *d += dpre * a;
                }
            }
        }
        add_grad(grads, pname("w", *t), x.matmul_tn(&dp).expect("shape"));
        add_grad(grads, pname("a_src", *t), Matrix::from_vec(hidden, 1, da_src).expect("a"));
        add_grad(grads, pname("a_dst", *t), Matrix::from_vec(hidden, 1, da_dst).expect("a"));
    }
}

/// Sampled inputs for one objective evaluation, fixed so the objective is a
/// deterministic function of the parameters.
#[derive(Debug, Clone)]
pub enum HanBatch {
    /// Row permutation producing the corrupted feature matrix.
    Contrastive { perm: Vec<usize> },
    /// Positive pairs and, for each, the negative nodes.
    Infonce { pairs: Vec<Pair>, negatives: Vec<Vec<usize>> },
}

fn cosine_grads(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let c = dot(a, b) / (na * nb);
    let da = a.iter().zip(b).map(|(&ai, &bi)| bi / (na * nb) - c * ai / (na * na)).collect();
    let db = a.iter().zip(b).map(|(&ai, &bi)| ai / (na * nb) - c * bi / (nb * nb)).collect();
    (c, da, db)
}

fn add_row(m: &mut Matrix, r: usize, g: &[f64], s: f64) {
    for (d, &x) in m.row_mut(r).iter_mut().zip(g) {
        *d += s * x;
    }
}

/// Loss and gradient for either training mode.
pub fn han_objective(
    store: &ParamStore,
    hg: &HanGraph,
    x: &Matrix,
    batch: &HanBatch,
    tau: f64,
    slope: f64,
) -> (f64, Grads) {
    let mut grads = Grads::new();
    match batch {
        HanBatch::Contrastive { perm } => {
            let real = forward(store, hg, x, slope);
            let corrupt_x = x.gather_rows(perm);
            let corrupt = forward(store, hg, &corrupt_x, slope);
            let n = real.z.rows();
            let latent = real.z.cols();
            let m: Vec<f64> = real.z.column_sums().data().iter().map(|v| v / n as f64).collect();
            let s: Vec<f64> = m.iter().map(|&v| sigmoid(v)).collect();
            let logits: Vec<f64> = (0..n)
                .map(|i| dot(real.z.row(i), &s))
                .chain((0..n).map(|i| dot(corrupt.z.row(i), &s)))
                .collect();
            let labels: Vec<f64> = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
            let (loss, g) = bce_loss(&Matrix::row_vector(&logits), &Matrix::row_vector(&labels))
                .expect("shape");
            let g = g.data();
            let mut dz = Matrix::zeros(n, latent);
            let mut dzc = Matrix::zeros(n, latent);
            let mut ds = vec![0.0; latent];
            for i in 0..n {
                add_row(&mut dz, i, &s, g[i]);
                add_row(&mut dzc, i, &s, g[n + i]);
                for (j, d) in ds.iter_mut().enumerate() {
                    *d += g[i] * real.z.get(i, j) + g[n + i] * corrupt.z.get(i, j);
                }
            }
            let dm: Vec<f64> = ds.iter().zip(&s).map(|(d, si)| d * si * (1.0 - si) / n as f64).collect();
            for i in 0..n {
                add_row(&mut dz, i, &dm, 1.0);
            }
            backward(store, hg, x, &real, &dz, slope, &mut grads);
            backward(store, hg, &corrupt_x, &corrupt, &dzc, slope, &mut grads);
            (loss, grads)
        }
        HanBatch::Infonce { pairs, negatives } => {
            let cache = forward(store, hg, x, slope);
            let z = &cache.z;
            let mut dz = Matrix::zeros(z.rows(), z.cols());
            let inv = 1.0 / pairs.len().max(1) as f64;
            let mut loss = 0.0;
            for (&(u, v), negs) in pairs.iter().zip(negatives) {
                let others: Vec<usize> = std::iter::once(v).chain(negs.iter().copied()).collect();
                let parts: Vec<(f64, Vec<f64>, Vec<f64>)> =
                    others.iter().map(|&k| cosine_grads(z.row(u), z.row(k))).collect();
                let logits: Vec<f64> = parts.iter().map(|p| p.0 / tau).collect();
                let probs = softmax(&logits);
                loss += -probs[0].max(1e-300).ln() * inv;
                for (j, (&k, (_, da, db))) in others.iter().zip(&parts).enumerate() {
                    let dl = (probs[j] - if j == 0 { 1.0 } else { 0.0 }) * inv / tau;
                    add_row(&mut dz, u, da, dl);
                    add_row(&mut dz, k, db, dl);
                }
            }
            backward(store, hg, x, &cache, &dz, slope, &mut grads);
            (loss, grads)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HanModel {
    pub params: ParamStore,
    pub config: HanConfig,
}

impl HanModel {
    pub fn init(in_dim: usize, edge_types: &[EdgeType], config: HanConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new(config.seed);
        for &t in edge_types {
            params.insert(pname("w", t), xavier_uniform(in_dim, config.hidden, &mut rng));
            params.insert(pname("a_src", t), xavier_uniform(config.hidden, 1, &mut rng));
            params.insert(pname("a_dst", t), xavier_uniform(config.hidden, 1, &mut rng));
        }
        params.insert("ws", xavier_uniform(config.hidden, config.hidden, &mut rng));
        params.insert("bs", Matrix::zeros(1, config.hidden));
        params.insert("q", xavier_uniform(config.hidden, 1, &mut rng));
        params.insert("proj", xavier_uniform(config.hidden, config.latent, &mut rng));
        params.insert("bproj", Matrix::zeros(1, config.latent));
        Self { params, config }
    }

    pub fn embed(&self, hg: &HanGraph, x: &Matrix) -> Matrix {
        forward(&self.params, hg, x, self.config.slope).z
    }

    /// Semantic attention over edge types for each node type.
    pub fn semantic_weights(&self, hg: &HanGraph, x: &Matrix) -> BTreeMap<NodeType, Vec<(EdgeType, f64)>> {
        let cache = forward(&self.params, hg, x, self.config.slope);
        hg.groups
            .iter()
            .zip(&cache.semantic)
            .map(|((t, _, chans), (_, beta))| {
                (*t, chans.iter().zip(beta).map(|(&c, &b)| (hg.channels[c].0, b)).collect())
            })
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = BTreeMap::new();
        meta.insert("model".into(), "han".into());
        meta.insert("config".into(), serde_json::to_value(self.config).expect("config"));
        self.params.to_checkpoint(meta)
    }
}

/// Mean silhouette with Euclidean distance. `None` with fewer than two labels.
/// Singleton clusters contribute 0.
pub fn silhouette(points: &Matrix, labels: &[usize]) -> Option<f64> {
    let n = points.rows();
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 || n < 2 {
        return None;
    }
    let dist = |i: usize, j: usize| {
        points
            .row(i)
            .iter()
            .zip(points.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for j in 0..n {
            if i != j {
                let e = sums.entry(labels[j]).or_default();
                e.0 += dist(i, j);
                e.1 += 1;
            }
        }
        let Some(&(own, own_n)) = sums.get(&labels[i]) else {
            continue;
        };
        if own_n == 0 {
            continue;
        }
        let a = own / own_n as f64;
        let b = sums
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, (s, c))| s / *c as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Some(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HanEpoch {
    pub epoch: usize,
    pub loss: f64,
}

pub struct HanTraining {
    pub model: HanModel,
    pub embeddings: Matrix,
    pub history: Vec<HanEpoch>,
    pub silhouette: Option<f64>,
    pub mean_pos_cosine: Option<f64>,
    pub mean_random_cosine: Option<f64>,
    pub semantic: BTreeMap<NodeType, Vec<(EdgeType, f64)>>,
}

fn sample_batch(config: &HanConfig, n: usize, pairs: &[Pair], rng: &mut ChaCha8Rng) -> HanBatch {
    match config.loss {
        HanLoss::Contrastive => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            HanBatch::Contrastive { perm }
        }
        HanLoss::Infonce => {
            let chosen: Vec<Pair> = if pairs.len() <= config.max_pairs {
                pairs.to_vec()
            } else {
                pairs.choose_multiple(rng, config.max_pairs).copied().collect()
            };
            let negatives = chosen
                .iter()
                .map(|&(u, v)| {
                    let mut negs = Vec::with_capacity(config.negatives);
                    while negs.len() < config.negatives && n > 2 {
                        let k = rng.gen_range(0..n);
                        if k != u && k != v {
                            negs.push(k);
                        }
                    }
                    negs
                })
                .collect();
            HanBatch::Infonce { pairs: chosen, negatives }
        }
    }
}

pub fn train_han(
    graph: &KnowledgeGraph,
    x: &Matrix,
    config: HanConfig,
) -> Result<HanTraining, DeepGraphError> {
    let n = graph.node_count();
    if x.rows() != n {
        return Err(DeepGraphError::FeatureMismatch { nodes: n, rows: x.rows() });
    }
    let hg = HanGraph::from_graph(graph);
    let pairs = undirected_pairs(graph);
    if hg.channels.is_empty() || (config.loss == HanLoss::Infonce && pairs.is_empty()) {
        return Err(DeepGraphError::GraphTooSmall { edges: pairs.len(), required: 1 });
    }
    if hg.node_type_count() < 2 {
        tracing::warn!("graph has a single node type; silhouette will be absent");
    }
    let mut model = HanModel::init(x.cols(), &hg.edge_types(), config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x4a7);
    let adam = AdamConfig::with_lr(config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batch = sample_batch(&config, n, &pairs, &mut rng);
        let (loss, grads) = han_objective(&model.params, &hg, x, &batch, config.tau, config.slope);
        if !loss.is_finite() {
            return Err(DeepGraphError::NonFiniteLoss { epoch, loss });
        }
        adam_step(&mut model.params, &grads, &adam)?;
        tracing::debug!(epoch, loss, "han epoch");
        history.push(HanEpoch { epoch, loss });
    }
    let embeddings = model.embed(&hg, x);
    let silhouette = silhouette(&embeddings, hg.labels());
    let (mean_pos_cosine, mean_random_cosine) = if config.loss == HanLoss::Infonce {
        let pos = pairs.iter().map(|&(u, v)| cosine(embeddings.row(u), embeddings.row(v))).sum::<f64>()
            / pairs.len() as f64;
        let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xe7a1);
        let draws = 1000;
        let mut total = 0.0;
        let mut taken = 0;
        while taken < draws && n > 1 {
            let (u, v) = (eval_rng.gen_range(0..n), eval_rng.gen_range(0..n));
            if u != v {
                total += cosine(embeddings.row(u), embeddings.row(v));
                taken += 1;
            }
        }
        let rand = total / draws as f64;
        (Some(pos), Some(rand))
    } else {
        (None, None)
    };
    let semantic = model.semantic_weights(&hg, x);
    Ok(HanTraining {
        model,
        embeddings,
        history,
        silhouette,
        mean_pos_cosine,
        mean_random_cosine,
        semantic,
    })
}
