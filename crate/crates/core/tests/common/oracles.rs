//! Brute-force reference implementations shared by the module suites and
//! the acceptance gate.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use quick_xml::events::Event;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use repograph_core::kblam::KblamModel;
use repograph_core::kgraph::{AttrValue, Attrs, Direction, Edge, EdgeType, KnowledgeGraph, Node, NodeType, Provenance};
use repograph_core::numkernel::Matrix;

pub fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in pos {
        for &n in neg {
            s += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

pub fn precision_at_positives_ap(pos: &[f64], neg: &[f64]) -> f64 {
    pos.iter()
        .map(|&t| {
            let tp = pos.iter().filter(|&&p| p >= t).count() as f64;
            let fp = neg.iter().filter(|&&p| p >= t).count() as f64;
            tp / (tp + fp)
        })
        .sum::<f64>()
        / pos.len() as f64
}

/// Enumerates every walk matching `steps` by depth-first search.
pub fn dfs_oracle(g: &KnowledgeGraph, starts: &[usize], steps: &[(EdgeType, Direction)], end: NodeType) -> BTreeMap<String, Vec<String>> {
    fn go(
        g: &KnowledgeGraph,
        path: &mut Vec<usize>,
        steps: &[(EdgeType, Direction)],
        end: NodeType,
        out: &mut BTreeMap<String, Vec<String>>,
    ) {
        let cur = *path.last().unwrap();
        if steps.is_empty() {
            if g.node_at(cur).node_type == end {
                let ids: Vec<String> = path.iter().map(|&i| g.node_at(i).id.clone()).collect();
                let slot = out.entry(ids.last().unwrap().clone()).or_insert_with(|| ids.clone());
                if ids < *slot {
                    *slot = ids;
                }
            }
            return;
        }
        let (t, dir) = steps[0];
        for e in g.edges() {
            let (from, to) = match dir {
                Direction::Forward => (&e.src, &e.dst),
                Direction::Reverse => (&e.dst, &e.src),
            };
            if e.edge_type == t && *from == g.node_at(cur).id {
                path.push(g.index_of(to).unwrap());
                go(g, path, &steps[1..], end, out);
                path.pop();
            }
        }
    }
    let mut out = BTreeMap::new();
    for &s in starts {
        go(g, &mut vec![s], steps, end, &mut out);
    }
    out
}

/// Random schema-valid pattern starting from `start`, or None if stuck.
pub fn random_pattern(rng: &mut ChaCha8Rng, start: NodeType, hops: usize) -> Option<(Vec<(EdgeType, Direction)>, NodeType)> {
    let mut cur = start;
    let mut steps = Vec::new();
    for _ in 0..hops {
        let mut options = Vec::new();
        for &t in EdgeType::ALL {
            for &o in NodeType::ALL {
                if t.allows(cur, o) {
                    options.push((t, Direction::Forward, o));
                }
                if t.allows(o, cur) {
                    options.push((t, Direction::Reverse, o));
                }
            }
        }
        if options.is_empty() {
            return None;
        }
        let (t, d, o) = options[rng.gen_range(0..options.len())];
        steps.push((t, d));
        cur = o;
    }
    Some((steps, cur))
}

/// softmax(q·Kᵀ/√d)·V per head, concatenated, then W_o, all by loops.
pub fn dense_attention(model: &KblamModel, query: &[f64], nodes: &Matrix, mask: &[bool]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let cfg = model.config;
    let p = &model.params;
    let (wq, wk, wv, wo) = (p.get("wq"), p.get("wk"), p.get("wv"), p.get("wo"));
    let d = cfg.attn_dim();
    let n = nodes.rows();
    let proj = |w: &Matrix, v: &[f64], c: usize| (0..v.len()).map(|r| v[r] * w.get(r, c)).sum::<f64>();
    let q: Vec<f64> = (0..d).map(|c| proj(wq, query, c)).collect();
    let k: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|c| proj(wk, nodes.row(i), c)).collect()).collect();
    let v: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|c| proj(wv, nodes.row(i), c)).collect()).collect();
    let mut concat = vec![0.0; d];
    let mut weights = Vec::new();
    for h in 0..cfg.heads {
        let r = h * cfg.head_dim..(h + 1) * cfg.head_dim;
        let s: Vec<f64> = (0..n)
            .map(|i| r.clone().map(|c| q[c] * k[i][c]).sum::<f64>() / (cfg.head_dim as f64).sqrt())
            .collect();
        let m = (0..n).filter(|&i| mask[i]).map(|i| s[i]).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = (0..n).map(|i| if mask[i] { (s[i] - m).exp() } else { 0.0 }).collect();
        let z: f64 = e.iter().sum();
        let a: Vec<f64> = e.iter().map(|x| x / z).collect();
        for c in r {
            concat[c] = (0..n).map(|i| a[i] * v[i][c]).sum();
        }
        weights.push(a);
    }
    let out = (0..d).map(|c| proj(wo, &concat, c)).collect();
    (out, weights)
}

pub fn attr_value() -> impl Strategy<Value = AttrValue> {
    prop_oneof![
        any::<bool>().prop_map(AttrValue::Bool),
        any::<i64>().prop_map(AttrValue::Int),
        (-1e12f64..1e12).prop_map(AttrValue::Float),
        "\\PC{0,12}".prop_map(AttrValue::Str),
        any::<String>().prop_map(AttrValue::Str),
    ]
}

pub fn attrs() -> impl Strategy<Value = Attrs> {
    proptest::collection::btree_map("[a-z_]{1,8}", attr_value(), 0..4)
}

pub fn random_graph() -> impl Strategy<Value = KnowledgeGraph> {
    let nodes = proptest::collection::vec(
        (0..NodeType::ALL.len(), "\\PC{0,10}", any::<String>(), attrs()),
        0..200,
    );
    (nodes, proptest::collection::vec((any::<usize>(), any::<usize>(), 0..EdgeType::ALL.len(), attrs()), 0..400))
        .prop_map(|(raw_nodes, raw_edges)| {
            let nodes: Vec<Node> = raw_nodes
                .into_iter()
                .enumerate()
                .map(|(i, (t, id_tail, label, attrs))| {
                    let mut n = Node::new(format!("n{i}:{id_tail}"), NodeType::ALL[t], label);
                    n.attrs = attrs;
                    n
                })
                .collect();
            let mut seen = BTreeSet::new();
            let mut edges = Vec::new();
            if !nodes.is_empty() {
                for (a, b, t, attrs) in raw_edges {
                    let (s, d) = (&nodes[a % nodes.len()], &nodes[b % nodes.len()]);
                    let t = EdgeType::ALL[t];
                    if t.allows(s.node_type, d.node_type) && seen.insert((s.id.clone(), d.id.clone(), t)) {
                        edges.push(Edge { src: s.id.clone(), dst: d.id.clone(), edge_type: t, attrs });
                    }
                }
            }
            let prov = Provenance { repo_id: "r".into(), head_sha: "0".repeat(40) };
            KnowledgeGraph::from_parts(prov, 7, nodes, edges).unwrap()
        })
}

#[derive(Default, Debug, PartialEq)]
pub struct XmlCounts {
    pub nodes: BTreeMap<String, usize>,
    pub edges: BTreeMap<String, usize>,
    pub node_ids: BTreeSet<String>,
    pub labels: BTreeMap<String, String>,
}

/// Reads a GraphML document with a general XML parser and tallies types.
pub fn read_graphml(xml: &str) -> XmlCounts {
    let mut reader = quick_xml::Reader::from_str(xml);
    let mut counts = XmlCounts::default();
    let mut current_node: Option<String> = None;
    let mut in_edge = false;
    let mut key: Option<String> = None;
    let mut text = String::new();
    loop {
        match reader.read_event().expect("well-formed xml") {
            Event::Start(e) => match e.name().as_ref() {
                b"node" => {
                    let id = e.try_get_attribute("id").unwrap().unwrap();
                    let id = id.unescape_value().unwrap().into_owned();
                    counts.node_ids.insert(id.clone());
                    current_node = Some(id);
                }
                b"edge" => in_edge = true,
                b"data" => {
                    let k = e.try_get_attribute("key").unwrap().unwrap();
                    key = Some(String::from_utf8(k.value.into_owned()).unwrap());
                    text.clear();
                }
                _ => {}
            },
            Event::Text(t) => text.push_str(&t.unescape().unwrap()),
            Event::End(e) => match e.name().as_ref() {
                b"node" => current_node = None,
                b"edge" => in_edge = false,
                b"data" => {
                    match key.as_deref() {
                        Some("d_type") => *counts.nodes.entry(text.clone()).or_default() += 1,
                        Some("e_type") if in_edge => *counts.edges.entry(text.clone()).or_default() += 1,
                        Some("d_label") => {
                            counts.labels.insert(current_node.clone().unwrap(), text.clone());
                        }
                        _ => {}
                    }
                    key = None;
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    counts
}

pub fn xml_safe(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '\t' | '\n' | '\r' => c,
            c if (c as u32) < 0x20 || c == '\u{FFFE}' || c == '\u{FFFF}' => '\u{FFFD}',
            c => c,
        })
        .collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

pub fn oracle_rank(ids: &[String], rows: &[Vec<f64>], q: &[f64], skip: Option<usize>, k: usize, need_nonzero: bool) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if Some(i) == skip || (need_nonzero && r.iter().all(|&v| v == 0.0)) {
            continue;
        }
        all.push((ids[i].clone(), cos(q, r)));
    }
    // selection by repeated maximum instead of sorting
    let mut out = Vec::new();
    while out.len() < k && !all.is_empty() {
        let mut best = 0;
        for j in 1..all.len() {
            let (a, b) = (&all[j], &all[best]);
            if a.1 > b.1 + 1e-12 || ((a.1 - b.1).abs() <= 1e-12 && a.0 < b.0) {
                best = j;
            }
        }
        out.push(all.swap_remove(best));
    }
    out
}

/// BFS over the undirected edge list, layers ordered by id.
pub fn bfs_oracle(graph: &KnowledgeGraph, center: &str, hops: usize) -> Vec<String> {
    let mut seen = BTreeSet::from([center.to_string()]);
    let mut order = vec![center.to_string()];
    let mut frontier = vec![center.to_string()];
    for _ in 0..hops {
        let mut next = BTreeSet::new();
        for e in graph.edges() {
            for (a, b) in [(&e.src, &e.dst), (&e.dst, &e.src)] {
                if frontier.contains(a) && !seen.contains(b) {
                    next.insert(b.clone());
                }
            }
        }
        seen.extend(next.iter().cloned());
        order.extend(next.iter().cloned());
        frontier = next.into_iter().collect();
    }
    order
}
