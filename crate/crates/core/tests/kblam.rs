mod common;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracles::*;
use common::synth;
use repograph_core::deepgraph::{traverse_path, PathPattern, StartFilter};
use repograph_core::featurize::{self, HashedSubwordEncoder, NodeFeatureMatrix};
use repograph_core::kblam::{
    self, generate_dataset, kblam_objective, load_dataset, parse_dataset, KblamConfig, KblamError,
    KblamModel, PreparedSample, QaSample, TemplateConfig, Window, WindowSpec,
};
use repograph_core::kgraph::{self, Direction, EdgeType, KnowledgeGraph, NodeType};
use repograph_core::numkernel::{gradient_check, Matrix, MASK_SENTINEL};

fn fixture_graph() -> KnowledgeGraph {
    kgraph::build_graph(&common::fixture().snapshot()).unwrap()
}

fn small_config(seed: u64) -> KblamConfig {
    KblamConfig {
        feature_dim: 4,
        text_dim: 5,
        hidden: 3,
        heads: 2,
        head_dim: 2,
        score_hidden: 3,
        seed,
        ..Default::default()
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, random_vec(rng, r * c)).unwrap()
}

// ---------- windows and the GNN layer ----------

#[test]
fn window_matches_bfs_oracle() {
    let g = fixture_graph();
    for hops in 0..=5 {
        let w = Window::expand(&g, "pr:#1", hops).unwrap();
        let mut oracle = BTreeSet::from([g.index_of("pr:#1").unwrap()]);
        let mut frontier = oracle.clone();
        for _ in 0..hops {
            let mut next = BTreeSet::new();
            for e in g.edges() {
                let (a, b) = (g.index_of(&e.src).unwrap(), g.index_of(&e.dst).unwrap());
                if frontier.contains(&a) && !oracle.contains(&b) {
                    next.insert(b);
                }
                if frontier.contains(&b) && !oracle.contains(&a) {
                    next.insert(a);
                }
            }
            oracle.extend(next.iter().copied());
            frontier = next;
        }
        assert_eq!(w.nodes.iter().copied().collect::<BTreeSet<_>>(), oracle, "hops {hops}");
        assert_eq!(w.nodes[0], g.index_of("pr:#1").unwrap());
    }
    assert!(matches!(Window::expand(&g, "pr:#1", 6), Err(KblamError::HopsTooDeep { hops: 6, max: 5 })));
    assert!(matches!(Window::expand(&g, "pr:#9", 1), Err(KblamError::UnknownCenter(_))));
}

#[test]
fn hop_zero_uses_self_fallback() {
    let g = synth::planted_cliques(1, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random_matrix(&mut rng, 3, 4);
    let mut model = KblamModel::init(small_config(1)).unwrap();
    *model.params.get_mut("gnn_b").unwrap() = random_matrix(&mut rng, 1, 3);
    let w = Window::expand(&g, &g.node_at(1).id, 0).unwrap();
    let h = model.encode_subgraph(&x, &w);
    assert_eq!(h.shape(), (1, 3));
    let (ws, wn, b) = (model.params.get("gnn_self"), model.params.get("gnn_neigh"), model.params.get("gnn_b"));
    for j in 0..3 {
        let mut v = b.get(0, j);
        for f in 0..4 {
            v += x.get(1, f) * (ws.get(f, j) + wn.get(f, j));
        }
        assert!((h.get(0, j) - v.max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn gnn_means_over_window_neighbours_only() {
    // path 0 - 1 - 2; a 1-hop window around 0 holds {0, 1}, so node 1 only
    // sees node 0 even though it also neighbours 2 in the full graph
    let nodes = (0..3).map(|i| (format!("function:p{i}"), NodeType::Function)).collect();
    let g = synth::graph_from(nodes, &[(0, 1, EdgeType::Calls), (1, 2, EdgeType::Calls)]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_matrix(&mut rng, 3, 4);
    let model = KblamModel::init(small_config(2)).unwrap();
    let w = Window::expand(&g, "function:p0", 1).unwrap();
    let h = model.encode_subgraph(&x, &w);
    let l1 = w.local_of(1).unwrap();
    let (ws, wn) = (model.params.get("gnn_self"), model.params.get("gnn_neigh"));
    for j in 0..3 {
        let v: f64 = (0..4).map(|f| x.get(1, f) * ws.get(f, j) + x.get(0, f) * wn.get(f, j)).sum();
        assert!((h.get(l1, j) - v.max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn default_dimensions() {
    let cfg = KblamConfig::default();
    assert_eq!((cfg.attn_dim(), cfg.score_input(), cfg.heads, cfg.head_dim), (256, 512, 4, 64));
    let model = KblamModel::init(cfg).unwrap();
    assert_eq!(model.params.get("gnn_self").shape(), (800, 256));
    assert_eq!(model.params.get("gnn_neigh").shape(), (800, 256));
    assert_eq!(model.params.get("wq").shape(), (768, 256));
    assert_eq!(model.params.get("s1").shape(), (512, 256));
    assert_eq!(model.params.get("s2").shape(), (256, 1));
    let g = fixture_graph();
    let feats = featurize::featurize_nodes(&g, &HashedSubwordEncoder::default()).unwrap();
    let h = model.encode_subgraph(&feats.matrix, &Window::expand(&g, "pr:#1", 2).unwrap());
    assert_eq!(h.cols(), 256);
}

// ---------- attention and scoring ----------

#[test]
fn rectangular_attention_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..100 {
        let cfg = KblamConfig {
            text_dim: rng.gen_range(2..7),
            hidden: rng.gen_range(2..6),
            heads: rng.gen_range(1..4),
            head_dim: rng.gen_range(1..4),
            seed: case,
            ..small_config(case)
        };
        let model = KblamModel::init(cfg).unwrap();
        let n = rng.gen_range(1..9);
        let nodes = random_matrix(&mut rng, n, cfg.hidden);
        let query = random_vec(&mut rng, cfg.text_dim);
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        mask[rng.gen_range(0..n)] = true;
        let (att, w) = model.rectangular_attention(&query, &nodes, &mask).unwrap();
        let (att_o, w_o) = dense_attention(&model, &query, &nodes, &mask);
        assert_eq!(w.shape(), (cfg.heads, n), "one query row per head");
        for (a, b) in att.iter().zip(&att_o) {
            assert!((a - b).abs() <= 1e-10, "case {case}: {a} vs {b}");
        }
        for h in 0..cfg.heads {
            let mut total = 0.0;
            for i in 0..n {
                assert!((w.get(h, i) - w_o[h][i]).abs() <= 1e-10);
                assert!(w.get(h, i) >= 0.0);
                if !mask[i] {
                    assert_eq!(w.get(h, i), 0.0);
                }
                total += w.get(h, i);
            }
            assert!((total - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn singleton_window_attends_fully() {
    let model = KblamModel::init(small_config(4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let nodes = random_matrix(&mut rng, 1, 3);
    let query = random_vec(&mut rng, 5);
    let (att, w) = model.rectangular_attention(&query, &nodes, &[true]).unwrap();
    assert!(w.data().iter().all(|&x| x == 1.0));
    let v = nodes.matmul(model.params.get("wv")).unwrap();
    let expected = v.matmul(model.params.get("wo")).unwrap();
    for (a, b) in att.iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(matches!(
        model.rectangular_attention(&query, &nodes, &[false]),
        Err(KblamError::AllMaskedRow)
    ));
}

#[test]
fn scores_match_per_pair_loop_and_ignore_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..100 {
        let model = KblamModel::init(small_config(case)).unwrap();
        let n = rng.gen_range(1..8);
        let nodes = random_matrix(&mut rng, n, 3);
        let attended = random_vec(&mut rng, 4);
        let mask = vec![true; n];
        let scores = model.score_nodes(&attended, &nodes, &mask);
        let p = &model.params;
        for i in 0..n {
            let input: Vec<f64> = attended.iter().chain(nodes.row(i)).copied().collect();
            assert_eq!(input.len(), 7);
            let mut out = p.get("s2_b").get(0, 0);
            for j in 0..3 {
                let pre: f64 = p.get("s1_b").get(0, j) + (0..7).map(|r| input[r] * p.get("s1").get(r, j)).sum::<f64>();
                out += pre.max(0.0) * p.get("s2").get(j, 0);
            }
            assert!((scores[i] - out).abs() <= 1e-10, "case {case}");
        }
        // append padding rows: real scores and attention are unchanged
        let pad = rng.gen_range(1..4);
        let mut padded = nodes.data().to_vec();
        padded.extend(random_vec(&mut rng, pad * 3));
        let padded = Matrix::from_vec(n + pad, 3, padded).unwrap();
        let pmask: Vec<bool> = (0..n + pad).map(|i| i < n).collect();
        let ps = model.score_nodes(&attended, &padded, &pmask);
        assert_eq!(&ps[..n], &scores[..]);
        assert!(ps[n..].iter().all(|&s| s == MASK_SENTINEL));
        let q = random_vec(&mut rng, 5);
        let (a1, _) = model.rectangular_attention(&q, &nodes, &mask).unwrap();
        let (a2, _) = model.rectangular_attention(&q, &padded, &pmask).unwrap();
        for (x, y) in a1.iter().zip(&a2) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let model = KblamModel::init(small_config(0)).unwrap();
    let s = model.score_nodes(&[0.1; 4], &Matrix::filled(3, 3, 0.5), &[false; 3]);
    assert!(s.iter().all(|&v| v == MASK_SENTINEL));
}

// ---------- gradients ----------

fn three_node_setup() -> (KnowledgeGraph, Matrix, HashedSubwordEncoder) {
    let nodes = vec![
        ("commit:c0".to_string(), NodeType::Commit),
        ("author:a".to_string(), NodeType::Author),
        ("file:f.py".to_string(), NodeType::File),
    ];
    let g = synth::graph_from(nodes, &[(0, 1, EdgeType::AuthoredBy), (0, 2, EdgeType::Modifies)]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (g, random_matrix(&mut rng, 3, 4), HashedSubwordEncoder::with_dim(5))
}

fn sample(center: &str, hops: usize, answers: &[&str]) -> QaSample {
    QaSample {
        question: "who wrote commit c0".into(),
        paraphrases: vec!["author of c0".into()],
        window: WindowSpec { center: center.into(), hops },
        answers: answers.iter().map(|s| s.to_string()).collect(),
        negatives: vec![],
        template: None,
    }
}

#[test]
fn end_to_end_gradient_check() {
    let (g, x, enc) = three_node_setup();
    let single = PreparedSample::new(&g, &sample("commit:c0", 1, &["author:a"]), &enc).unwrap();
    let multi = PreparedSample::new(&g, &sample("commit:c0", 1, &["author:a", "file:f.py"]), &enc).unwrap();
    assert_eq!(single.window.len(), 3);
    for seed in 0..3 {
        let cfg = small_config(seed);
        let model = KblamModel::init(cfg).unwrap();
        let batch = [(&single, 0), (&multi, 1)];
        let eval = gradient_check(|s| kblam_objective(s, &cfg, &x, &batch, None).unwrap(), &model.params, 1e-6);
        assert!(eval <= 1e-4, "seed {seed} inference mode: {eval}");
        let train = gradient_check(|s| kblam_objective(s, &cfg, &x, &batch, Some(99)).unwrap(), &model.params, 1e-6);
        assert!(train <= 1e-4, "seed {seed} with dropout: {train}");
    }
}

// ---------- datasets ----------

fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn loads_fixture_dataset() {
    let g = fixture_graph();
    let ds = load_dataset(&fixture_path("qa_small.yaml"), &g).unwrap();
    assert_eq!((ds.train.len(), ds.val.len()), (10, 3));
    assert_eq!(ds.train[0].paraphrases.len(), 1);
    // the hand-written answers agree with the traversal oracle
    let last = &ds.val[2];
    let pattern = PathPattern::new(
        StartFilter::Ids(vec!["pr:#2".into()]),
        vec![(EdgeType::Includes, Direction::Forward), (EdgeType::Modifies, Direction::Forward), (EdgeType::Contains, Direction::Forward)],
        NodeType::Function,
    );
    let oracle: Vec<String> = traverse_path(&g, &pattern).unwrap().into_iter().map(|h| h.node).collect();
    assert_eq!(last.answers, oracle);
}

#[test]
fn dataset_validation_errors() {
    let g = fixture_graph();
    let base = std::fs::read_to_string(fixture_path("qa_small.yaml")).unwrap();

    let missing = base.replacen("    window: {center: \"pr:#2\", hops: 1}\n", "", 1);
    match parse_dataset(&missing, "qa.yaml", &g) {
        Err(KblamError::SchemaError { path, message }) => {
            assert_eq!(path, "qa.yaml");
            assert!(message.contains("window"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let dangling = base.replace("author:bob", "author:carol");
    match parse_dataset(&dangling, "qa.yaml", &g) {
        Err(KblamError::DanglingNodeRef { ids }) => assert_eq!(ids, vec!["author:carol".to_string()]),
        other => panic!("{other:?}"),
    }
    // the author is two hops from the PR, outside a one-hop window
    let outside = base.replacen("answers: [\"commit:a9f6e40d5dd45c9fae8c54dfee345d99c0a7345a\"]", "answers: [\"author:bob\"]", 1);
    assert!(matches!(parse_dataset(&outside, "qa.yaml", &g), Err(KblamError::OutsideWindow { .. })));
    let overlap = base.replacen("negatives: [\"file:app/render.py\"]", "negatives: [\"author:bob\"]", 1);
    assert!(matches!(parse_dataset(&overlap, "qa.yaml", &g), Err(KblamError::SchemaError { .. })));
    let split = base.replace("val: [10, 11, 12]", "val: [9, 11, 12]");
    assert!(matches!(parse_dataset(&split, "qa.yaml", &g), Err(KblamError::SchemaError { .. })));
    let deep = base.replacen("hops: 3}", "hops: 6}", 1);
    assert!(matches!(parse_dataset(&deep, "qa.yaml", &g), Err(KblamError::SchemaError { .. })));
    let unknown = base.replacen("    negatives: []\n", "    distractors: []\n", 1);
    assert!(matches!(parse_dataset(&unknown, "qa.yaml", &g), Err(KblamError::SchemaError { .. })));
}

#[test]
fn generated_dataset_is_verified_and_deterministic() {
    let g = fixture_graph();
    let cfg = TemplateConfig::default();
    let ds = generate_dataset(&g, &cfg, (40, 10), 3).unwrap();
    assert_eq!((ds.train.len(), ds.val.len()), (40, 10));
    let text = ds.to_yaml();
    assert_eq!(generate_dataset(&g, &cfg, (40, 10), 3).unwrap().to_yaml(), text);
    assert_ne!(generate_dataset(&g, &cfg, (40, 10), 4).unwrap().to_yaml(), text);
    let reparsed = parse_dataset(&text, "generated", &g).unwrap();
    assert_eq!(reparsed, ds);

    let mut keys = BTreeSet::new();
    for s in ds.train.iter().chain(&ds.val) {
        assert!(keys.insert((s.question.clone(), s.window.center.clone())), "duplicate {}", s.question);
        assert!(s.negatives.iter().all(|n| !s.answers.contains(n)));
        assert!(!s.answers.is_empty());
    }
}

/// Answers recomputed with a plain edge scan for two templates.
#[test]
fn generated_answers_match_edge_scan() {
    let g = fixture_graph();
    let cfg = TemplateConfig { templates: vec!["commit_author".into(), "pr_functions".into()], ..Default::default() };
    let ds = generate_dataset(&g, &cfg, (30, 0), 0).unwrap();
    let targets = |src: &str, t: EdgeType| -> Vec<String> {
        g.edges().iter().filter(|e| e.src == src && e.edge_type == t).map(|e| e.dst.clone()).collect()
    };
    for s in &ds.train {
        let c = &s.window.center;
        let mut expected = match s.template.as_deref() {
            Some("commit_author") => targets(c, EdgeType::AuthoredBy),
            Some("pr_functions") => {
                let mut out = BTreeSet::new();
                for commit in targets(c, EdgeType::Includes) {
                    for file in targets(&commit, EdgeType::Modifies) {
                        for f in targets(&file, EdgeType::Contains) {
                            if g.node(&f).unwrap().node_type == NodeType::Function {
                                out.insert(f);
                            }
                        }
                    }
                }
                out.into_iter().collect()
            }
            other => panic!("{other:?}"),
        };
        expected.sort();
        assert_eq!(s.answers, expected, "{}", s.question);
    }
    let authorship = ds.train.iter().find(|s| s.question.contains("a9f6e40")).unwrap();
    assert_eq!(authorship.answers, vec!["author:bob".to_string()]);
    let pr1 = ds.train.iter().find(|s| s.window.center == "pr:#1").unwrap();
    let manifest: Vec<String> = common::manifest()["pr1_functions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(pr1.answers, manifest);
}

#[test]
fn generation_needs_structure() {
    let g = synth::planted_cliques(2, 4);
    assert!(matches!(
        generate_dataset(&g, &TemplateConfig::default(), (4, 1), 0),
        Err(KblamError::InsufficientStructure(_))
    ));
    let fixture = fixture_graph();
    assert!(matches!(
        generate_dataset(&fixture, &TemplateConfig::default(), (5000, 10), 0),
        Err(KblamError::InsufficientStructure(_))
    ));
}

// ---------- training ----------

fn fixture_features(g: &KnowledgeGraph) -> NodeFeatureMatrix {
    featurize::featurize_nodes(g, &HashedSubwordEncoder::default()).unwrap()
}

#[test]
fn single_sample_overfits() {
    let g = fixture_graph();
    let feats = fixture_features(&g);
    let full = load_dataset(&fixture_path("qa_small.yaml"), &g).unwrap();
    let one = kblam::QaDataset { train: vec![full.train[8].clone()], val: vec![], source: None };
    let cfg = KblamConfig { epochs: 10, hidden: 64, heads: 4, head_dim: 16, score_hidden: 64, ..Default::default() };
    let run = kblam::train_kblam(&g, &feats, &one, &HashedSubwordEncoder::default(), cfg, |_| {}).unwrap();
    let losses: Vec<f64> = run.history.iter().map(|e| e.loss).collect();
    assert_eq!(losses.len(), 10);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let g = fixture_graph();
    let feats = fixture_features(&g);
    let ds = load_dataset(&fixture_path("qa_small.yaml"), &g).unwrap();
    let cfg = KblamConfig { epochs: 3, hidden: 16, heads: 2, head_dim: 8, score_hidden: 16, seed: 5, ..Default::default() };
    let enc = HashedSubwordEncoder::default();
    let a = kblam::train_kblam(&g, &feats, &ds, &enc, cfg, |_| {}).unwrap();
    let b = kblam::train_kblam(&g, &feats, &ds, &enc, cfg, |_| {}).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.to_checkpoint().to_json(), b.model.to_checkpoint().to_json());
    let back = KblamModel::from_checkpoint(&a.model.to_checkpoint()).unwrap();
    assert_eq!(back.params.names().collect::<Vec<_>>(), a.model.params.names().collect::<Vec<_>>());
    assert_eq!(back.config, a.model.config);
    let empty = kblam::QaDataset { train: vec![], val: vec![], source: None };
    assert!(matches!(kblam::train_kblam(&g, &feats, &empty, &enc, cfg, |_| {}), Err(KblamError::EmptyDataset)));
}

#[test]
fn untrained_answers_are_flagged_and_traced() {
    let g = fixture_graph();
    let feats = fixture_features(&g);
    let model = KblamModel::init(KblamConfig { hidden: 16, heads: 2, head_dim: 8, score_hidden: 16, ..Default::default() }).unwrap();
    let enc = HashedSubwordEncoder::default();
    let a = kblam::answer(&model, &g, &feats, &enc, "which functions were changed by commits in PR #1", None, 5).unwrap();
    assert_eq!(a.center, "pr:#1");
    assert_eq!(a.hops, 3);
    assert!(a.low_confidence);
    assert_eq!(a.ranked.len(), 5);
    let total: f64 = a.attention.averaged.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    for r in &a.ranked {
        let path = &a.paths[&r.id];
        assert_eq!(path.first().unwrap(), "pr:#1");
        assert_eq!(path.last().unwrap(), &r.id);
        assert!(path.len() <= 4);
    }
    let deep = kblam::WindowHint { center: Some("commit:b2f6ed90fbe7ebc6973970054d30be1ddee18579".into()), hops: Some(5) };
    assert_eq!(kblam::answer(&model, &g, &feats, &enc, "anything", Some(&deep), 3).unwrap().hops, 5);
    let bad = kblam::WindowHint { center: Some("pr:#7".into()), hops: None };
    assert!(matches!(kblam::answer(&model, &g, &feats, &enc, "x", Some(&bad), 3), Err(KblamError::UnknownCenter(_))));
}
