mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use proptest::prelude::*;
use repograph_core::featurize::{
    self, encode_text, FeaturizeError, HashedSubwordEncoder, HttpEncoder, TextEncoder,
    FEATURE_DIM, NUMERIC_DIM, TEXT_DIM, TYPE_OFFSET,
};
use repograph_core::kgraph::{self, Edge, EdgeType, KnowledgeGraph, Node, NodeType, Provenance};
use repograph_core::numkernel::cosine;

/// Independent reimplementation: explicit gram lists, FNV written out longhand,
/// sparse accumulation.
fn oracle_encode(text: &str) -> BTreeMap<usize, f64> {
    fn fnv(state: u64, s: &str) -> u64 {
        s.bytes().fold(state, |h, b| (h ^ u64::from(b)).wrapping_mul(1099511628211))
    }
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            cur.push(c);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    let mut acc = BTreeMap::new();
    for t in &tokens {
        let padded: Vec<char> = format!("<{t}>").chars().collect();
        for i in 0..padded.len() - 2 {
            let g: String = padded[i..i + 3].iter().collect();
            let idx = (fnv(14695981039346656037, &g) % 768) as usize;
            let sign = if fnv(0x9e3779b97f4a7c15, &g) % 2 == 0 { 1.0 } else { -1.0 };
            *acc.entry(idx).or_insert(0.0) += sign;
        }
    }
    let norm: f64 = acc.values().map(|v: &f64| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        acc.values_mut().for_each(|v| *v /= norm);
    }
    acc
}

fn sparse_cos(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> f64 {
    a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum()
}

#[test]
fn encoder_matches_sparse_oracle() {
    let e = HashedSubwordEncoder::default();
    for text in ["open file", "opens files", "merge branch", "Render_Markdown(text)", "日本語 テキスト", ""] {
        let dense = e.encode(text);
        let sparse = oracle_encode(text);
        for (i, &x) in dense.iter().enumerate() {
            let y = sparse.get(&i).copied().unwrap_or(0.0);
            assert!((x - y).abs() < 1e-12, "{text}: dim {i} {x} vs {y}");
        }
    }
}

#[test]
fn shared_subwords_rank_similar_phrases_higher() {
    // <op ope pen en> / <fi fil ile le>  vs  <op ope pen ens ns> / <fi fil ile les es>:
    // six shared grams out of 8 and 10. "merge branch" (11 grams) shares no
    // gram, but "ch>" lands in the same bucket (688, sign +) as "pen".
    let a = oracle_encode("open file");
    let b = oracle_encode("opens files");
    let c = oracle_encode("merge branch");
    let close = sparse_cos(&a, &b);
    let far = sparse_cos(&a, &c);
    assert!((close - 6.0 / 80f64.sqrt()).abs() < 1e-12, "{close}");
    assert!((far - 1.0 / 88f64.sqrt()).abs() < 1e-12, "{far}");

    let e = HashedSubwordEncoder::default();
    let (va, vb, vc) = (e.encode("open file"), e.encode("opens files"), e.encode("merge branch"));
    assert!(cosine(&va, &vb) > cosine(&va, &vc));
    assert!((cosine(&va, &vb) - close).abs() < 1e-12);
}

fn singleton_graph() -> KnowledgeGraph {
    let f = Node::new("function:a.py::f", NodeType::Function, "")
        .with("complexity", 2i64)
        .with("params", 1i64);
    KnowledgeGraph::from_parts(Provenance::default(), 0, vec![f], vec![]).unwrap()
}

#[test]
fn singleton_function_normalization() {
    let m = featurize::featurize_nodes(&singleton_graph(), &HashedSubwordEncoder::default()).unwrap();
    assert_eq!((m.matrix.rows(), m.matrix.cols()), (1, 800));
    let mut expected = [0.0; NUMERIC_DIM];
    // constant columns: positive -> 1, zero -> 0
    expected[0] = 1.0;
    expected[1] = 1.0;
    expected[TYPE_OFFSET + NodeType::Function.index()] = 1.0;
    assert_eq!(m.numeric(0), &expected[..]);
    assert!(m.text(0).iter().all(|&x| x == 0.0));
}

#[test]
fn min_max_over_two_functions() {
    let nodes = vec![
        Node::new("function:a.py::f", NodeType::Function, "f").with("complexity", 2i64).with("params", 1i64),
        Node::new("function:a.py::g", NodeType::Function, "g").with("complexity", 6i64).with("params", 1i64),
        Node::new("function:a.py::h", NodeType::Function, "h").with("complexity", 3i64),
    ];
    let g = KnowledgeGraph::from_parts(Provenance::default(), 0, nodes, vec![]).unwrap();
    let m = featurize::featurize_nodes(&g, &HashedSubwordEncoder::default()).unwrap();
    let cx: Vec<f64> = (0..3).map(|r| m.numeric(r)[0]).collect();
    assert_eq!(cx, vec![0.0, 1.0, 0.25]);
    let params: Vec<f64> = (0..3).map(|r| m.numeric(r)[1]).collect();
    assert_eq!(params, vec![1.0, 1.0, 0.0]);
}

#[test]
fn fixture_graph_shape_and_ranges() {
    let g = kgraph::build_graph(&common::fixture().snapshot()).unwrap();
    let m = featurize::featurize_nodes(&g, &HashedSubwordEncoder::default()).unwrap();
    assert_eq!(m.matrix.rows(), g.node_count());
    assert_eq!(m.matrix.cols(), FEATURE_DIM);
    for r in 0..m.matrix.rows() {
        assert!(m.numeric(r).iter().all(|&x| (0.0..=1.0).contains(&x)));
        let n: f64 = m.text(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(n <= 1.0 + 1e-12);
        let one_hot: f64 = m.numeric(r)[TYPE_OFFSET..TYPE_OFFSET + 16].iter().sum();
        assert_eq!(one_hot, 1.0);
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("features.json");
    m.save(&p).unwrap();
    assert_eq!(featurize::NodeFeatureMatrix::load(&p).unwrap(), m);
}

struct ConstEncoder;

impl TextEncoder for ConstEncoder {
    fn encoder_id(&self) -> String {
        "const".into()
    }
    fn dim(&self) -> usize {
        TEXT_DIM
    }
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, FeaturizeError> {
        Ok(texts.iter().map(|_| vec![0.5; TEXT_DIM]).collect())
    }
}

struct DownEncoder;

impl TextEncoder for DownEncoder {
    fn encoder_id(&self) -> String {
        "down".into()
    }
    fn dim(&self) -> usize {
        TEXT_DIM
    }
    fn encode_batch(&self, _: &[&str]) -> Result<Vec<Vec<f64>>, FeaturizeError> {
        Err(FeaturizeError::EncoderUnavailable("offline".into()))
    }
}

#[test]
fn swapping_encoders_changes_only_text_slice() {
    let g = kgraph::build_graph(&common::fixture().snapshot()).unwrap();
    let a = featurize::featurize_nodes(&g, &HashedSubwordEncoder::default()).unwrap();
    let b = featurize::featurize_nodes(&g, &ConstEncoder).unwrap();
    for r in 0..a.matrix.rows() {
        assert_eq!(a.numeric(r), b.numeric(r));
    }
    assert_ne!(a.text(0), b.text(0));

    let c = featurize::featurize_nodes(&g, &DownEncoder).unwrap();
    assert_eq!(c.matrix, a.matrix);
    assert_eq!(encode_text(&DownEncoder, "open file"), HashedSubwordEncoder::default().encode("open file"));
}

#[test]
fn wrong_dimension_is_rejected() {
    let r = featurize::featurize_nodes(&singleton_graph(), &HashedSubwordEncoder::with_dim(16));
    assert!(matches!(r, Err(FeaturizeError::DimensionMismatch { found: 16, .. })));
}

fn serve_encoder(requests: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let mut len = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h == "\r\n" {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let out = if line.starts_with("GET /info") {
                format!("{{\"dimension\": {TEXT_DIM}, \"model\": \"stub\"}}")
            } else {
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let n = req["texts"].as_array().unwrap().len();
                let v = vec![vec![0.25f64; TEXT_DIM]; n];
                serde_json::json!({ "vectors": v }).to_string()
            };
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                out.len(),
                out
            )
            .unwrap();
        }
    });
    format!("http://{addr}")
}

#[test]
fn http_encoder_contract() {
    let base = serve_encoder(2);
    let enc = HttpEncoder::connect(&base, std::time::Duration::from_secs(5)).unwrap();
    assert_eq!(enc.dim(), TEXT_DIM);
    assert!(enc.encoder_id().contains("stub"));
    let v = enc.encode_batch(&["a", "b"]).unwrap();
    assert_eq!(v.len(), 2);
    assert_eq!(v[0][3], 0.25);
}

#[test]
fn row_order_follows_node_ids_for_any_input_order() {
    let mk = |order: &[usize]| {
        let base = [
            Node::new("file:a.py", NodeType::File, "a.py"),
            Node::new("function:a.py::f", NodeType::Function, "f").with("complexity", 3i64),
            Node::new("function:a.py::g", NodeType::Function, "g").with("complexity", 1i64),
        ];
        let nodes = order.iter().map(|&i| base[i].clone()).collect();
        let edges = vec![Edge {
            src: "file:a.py".into(),
            dst: "function:a.py::g".into(),
            edge_type: EdgeType::Contains,
            attrs: Default::default(),
        }];
        let g = KnowledgeGraph::from_parts(Provenance::default(), 0, nodes, edges).unwrap();
        featurize::featurize_nodes(&g, &HashedSubwordEncoder::default()).unwrap()
    };
    let a = mk(&[0, 1, 2]);
    let b = mk(&[2, 0, 1]);
    assert_eq!(a, b);
    assert_eq!(a.node_ids, vec!["file:a.py", "function:a.py::f", "function:a.py::g"]);
}

proptest! {
    #[test]
    fn encoder_norm_bounded(text in "\\PC{0,60}") {
        let v = HashedSubwordEncoder::default().encode(&text);
        prop_assert_eq!(v.len(), TEXT_DIM);
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n <= 1.0 + 1e-12);
        prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn feature_shape_is_800(types in proptest::collection::vec(0..16usize, 1..40)) {
        let nodes: Vec<Node> = types.iter().enumerate()
            .map(|(i, &t)| Node::new(format!("n{i:03}"), NodeType::ALL[t], format!("node {i}")))
            .collect();
        let g = KnowledgeGraph::from_parts(Provenance::default(), 0, nodes, vec![]).unwrap();
        let m = featurize::featurize_nodes(&g, &HashedSubwordEncoder::default()).unwrap();
        prop_assert_eq!(m.matrix.cols(), 800);
        prop_assert_eq!(m.matrix.rows(), types.len());
    }
}
