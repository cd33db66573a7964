use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::featurize::{encode_text, NodeFeatureMatrix, TextEncoder};
use crate::kgraph::{Direction, EdgeType, KnowledgeGraph, NodeType};
use crate::numkernel::{cosine, Matrix};

use super::sage::SageModel;
use super::traverse::{PathPattern, StartFilter};
use super::DeepGraphError;

static PR_NUM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:#|\bpr\s*#?|\bpull\s+request\s*#?)(\d+)\b").unwrap());
static PR_CUE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(prs?|pull\s+requests?)\b|#\d+").unwrap());
static SHA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b[0-9a-f]{7,40}\b").unwrap());
static PATH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\w./-]+\.py\b").unwrap());
static DEFINES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:defines?|defining|contains?|containing|declares?)\s+`?'?([A-Za-z_][A-Za-z0-9_]*)").unwrap()
});
static QUOTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"[`'"]([A-Za-z_][A-Za-z0-9_.]*)[`'"]"#).unwrap());
static CALLERS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:call|calls|invoke|invokes|use|uses)\s+`?'?([A-Za-z_][A-Za-z0-9_]*)").unwrap()
});
static CALLEES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:does|do)\s+`?'?([A-Za-z_][A-Za-z0-9_]*)`?'?\s+(?:call|invoke|use)\b").unwrap()
});

fn word(text: &str, pattern: &str) -> bool {
    Regex::new(&format!(r"\b(?:{pattern})\b")).unwrap().is_match(text)
}

/// A question matched to a typed walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledQuery {
    pub template: String,
    pub pattern: PathPattern,
}

fn resolve_pr(graph: &KnowledgeGraph, text: &str) -> Option<StartFilter> {
    match PR_NUM.captures(text) {
        Some(c) => {
            let id = format!("pr:#{}", &c[1]);
            graph.node(&id).map(|_| StartFilter::Ids(vec![id]))
        }
        None => Some(StartFilter::Type(NodeType::PullRequest)),
    }
}

fn resolve_sha(graph: &KnowledgeGraph, text: &str) -> Option<StartFilter> {
    for m in SHA.find_iter(text) {
        let prefix = m.as_str();
        if !prefix.chars().any(|c| c.is_ascii_digit()) {
            continue;
        }
        let ids: Vec<String> = graph
            .nodes()
            .iter()
            .filter(|n| n.node_type == NodeType::Commit && n.attr_str("sha").is_some_and(|s| s.starts_with(prefix)))
            .map(|n| n.id.clone())
            .collect();
        if !ids.is_empty() {
            return Some(StartFilter::Ids(ids));
        }
    }
    None
}

fn resolve_path(graph: &KnowledgeGraph, original: &str) -> Option<StartFilter> {
    let m = PATH.find(original)?;
    let path = m.as_str().trim_start_matches("./");
    let exact = format!("file:{path}");
    if graph.node(&exact).is_some() {
        return Some(StartFilter::Ids(vec![exact]));
    }
    let ids: Vec<String> = graph
        .nodes()
        .iter()
        .filter(|n| n.node_type == NodeType::File && (n.label.ends_with(&format!("/{path}")) || path.ends_with(&format!("/{}", n.label))))
        .map(|n| n.id.clone())
        .collect();
    (!ids.is_empty()).then_some(StartFilter::Ids(ids))
}

/// Non-external functions whose name or qualified name equals `name`.
pub fn functions_named(graph: &KnowledgeGraph, name: &str) -> Vec<String> {
    graph
        .nodes()
        .iter()
        .filter(|n| {
            n.node_type == NodeType::Function
                && n.attr("external").and_then(|v| v.as_bool()) != Some(true)
                && (n.label == name
                    || n.attr_str("qualified_name").is_some_and(|q| q == name || q.ends_with(&format!("::{name}"))))
        })
        .map(|n| n.id.clone())
        .collect()
}

fn resolve_function(graph: &KnowledgeGraph, name: &str) -> Option<StartFilter> {
    let ids = functions_named(graph, name);
    (!ids.is_empty()).then_some(StartFilter::Ids(ids))
}

fn compiled(template: &str, start: StartFilter, steps: &[(EdgeType, Direction)], end: NodeType) -> CompiledQuery {
    CompiledQuery {
        template: template.into(),
        pattern: PathPattern::new(start, steps.to_vec(), end),
    }
}

/// Node ids a question names explicitly: a PR number, a commit sha prefix,
/// a file path, or a function name. PRs first, then commits, files and
/// functions; each group in id order.
pub fn resolve_entities(graph: &KnowledgeGraph, question: &str) -> Vec<String> {
    let text = question.to_lowercase();
    let mut out = Vec::new();
    if let Some(c) = PR_NUM.captures(&text) {
        let id = format!("pr:#{}", &c[1]);
        if graph.node(&id).is_some() {
            out.push(id);
        }
    }
    for filter in [resolve_sha(graph, &text), resolve_path(graph, question)].into_iter().flatten() {
        if let StartFilter::Ids(ids) = filter {
            out.extend(ids);
        }
    }
    let mut names: Vec<String> = quoted_identifiers(question);
    names.extend(
        question
            .split(|c: char| !(c.is_alphanumeric() || c == '_'))
            .filter(|w| w.len() >= 3)
            .map(str::to_string),
    );
    let mut functions = BTreeSet::new();
    for name in names {
        functions.extend(functions_named(graph, &name));
    }
    for f in functions {
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

/// Matches a question against the known multi-hop and single-hop templates.
/// Returns `None` when no template applies or an entity does not resolve.
pub fn compile_query(graph: &KnowledgeGraph, question: &str) -> Option<CompiledQuery> {
    use Direction::{Forward as F, Reverse as R};
    use EdgeType as E;
    let text = question.to_lowercase();
    let wants_person = word(&text, "who|whom|authors?|developers?|contributors?|people");
    let wants_functions = word(&text, "functions?|methods?");
    let wants_files = word(&text, "files?|modules?");
    let wants_commits = word(&text, "commits?");
    let has_pr = PR_CUE.is_match(&text);
    let has_path = PATH.is_match(question);
    let has_sha = SHA.find_iter(&text).any(|m| m.as_str().chars().any(|c| c.is_ascii_digit()));

    if has_sha && !has_pr {
        let start = resolve_sha(graph, &text)?;
        if wants_person {
            return Some(compiled("commit_author", start, &[(E::AuthoredBy, F)], NodeType::Author));
        }
        if wants_functions {
            return Some(compiled("commit_functions", start, &[(E::Modifies, F), (E::Contains, F)], NodeType::Function));
        }
        if wants_files {
            return Some(compiled("commit_files", start, &[(E::Modifies, F)], NodeType::File));
        }
    }
    if has_sha && has_pr && !PR_NUM.is_match(&text) {
        let start = resolve_sha(graph, &text)?;
        return Some(compiled("commit_prs", start, &[(E::Includes, R)], NodeType::PullRequest));
    }
    if has_pr {
        if wants_functions {
            let start = resolve_pr(graph, &text)?;
            return Some(compiled(
                "pr_functions",
                start,
                &[(E::Includes, F), (E::Modifies, F), (E::Contains, F)],
                NodeType::Function,
            ));
        }
        if wants_files {
            let start = resolve_pr(graph, &text)?;
            return Some(compiled("pr_files", start, &[(E::Includes, F), (E::Modifies, F)], NodeType::File));
        }
        if wants_person && wants_commits {
            let start = resolve_pr(graph, &text)?;
            return Some(compiled("pr_commit_authors", start, &[(E::Includes, F), (E::AuthoredBy, F)], NodeType::Author));
        }
        if wants_person && PR_NUM.is_match(&text) {
            let start = resolve_pr(graph, &text)?;
            return Some(compiled("pr_opener", start, &[(E::OpenedBy, F)], NodeType::User));
        }
        if wants_commits {
            let start = resolve_pr(graph, &text)?;
            return Some(compiled("pr_commits", start, &[(E::Includes, F)], NodeType::Commit));
        }
    }
    if has_path {
        let start = resolve_path(graph, question)?;
        if wants_person {
            return Some(compiled("file_authors", start, &[(E::Modifies, R), (E::AuthoredBy, F)], NodeType::Author));
        }
        if wants_commits {
            return Some(compiled("file_commits", start, &[(E::Modifies, R)], NodeType::Commit));
        }
        if wants_functions {
            return Some(compiled("file_functions", start, &[(E::Contains, F)], NodeType::Function));
        }
    }
    if let Some(c) = DEFINES.captures(question) {
        let start = resolve_function(graph, &c[1])?;
        if wants_commits {
            return Some(compiled("defining_file_commits", start, &[(E::Contains, R), (E::Modifies, R)], NodeType::Commit));
        }
        if wants_person {
            return Some(compiled(
                "defining_file_authors",
                start,
                &[(E::Contains, R), (E::Modifies, R), (E::AuthoredBy, F)],
                NodeType::Author,
            ));
        }
    }
    if let Some(c) = CALLEES.captures(question) {
        let start = resolve_function(graph, &c[1])?;
        return Some(compiled("callees", start, &[(E::Calls, F)], NodeType::Function));
    }
    if wants_functions || word(&text, "who") {
        if let Some(c) = CALLERS.captures(question) {
            let start = resolve_function(graph, &c[1])?;
            return Some(compiled("callers", start, &[(E::Calls, R)], NodeType::Function));
        }
    }
    None
}

/// Node types a question asks for, from its wh-word or first type noun.
pub fn target_types(question: &str) -> BTreeSet<NodeType> {
    let text = question.to_lowercase();
    if word(&text, "who|whom") {
        return BTreeSet::from([NodeType::Author, NodeType::User]);
    }
    let nouns: [(&str, &[NodeType]); 8] = [
        ("functions?|methods?", &[NodeType::Function]),
        ("files?|modules?", &[NodeType::File]),
        ("commits?", &[NodeType::Commit]),
        ("prs?|pull\\s+requests?", &[NodeType::PullRequest]),
        ("class(?:es)?", &[NodeType::Class]),
        ("authors?|developers?", &[NodeType::Author, NodeType::User]),
        ("docstrings?", &[NodeType::Docstring]),
        ("imports?", &[NodeType::Import]),
    ];
    let mut best: Option<(usize, &[NodeType])> = None;
    for (pat, types) in nouns {
        if let Some(m) = Regex::new(&format!(r"\b(?:{pat})\b")).unwrap().find(&text) {
            if best.map_or(true, |(pos, _)| m.start() < pos) {
                best = Some((m.start(), types));
            }
        }
    }
    best.map(|(_, t)| t.iter().copied().collect()).unwrap_or_default()
}

/// Identifiers quoted in a question.
pub fn quoted_identifiers(question: &str) -> Vec<String> {
    QUOTED.captures_iter(question).map(|c| c[1].to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedNode {
    pub id: String,
    pub score: f64,
    pub seed: String,
    /// Edge joining the seed and this node, as (src, dst, type).
    pub edge: (String, String, EdgeType),
}

pub const SEED_COUNT: usize = 5;
pub const SEED_THRESHOLD: f64 = 0.05;

/// Top nodes by cosine between the query vector and each node's text slice.
pub fn text_seeds(features: &NodeFeatureMatrix, query: &[f64], count: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = (0..features.matrix.rows())
        .map(|r| (r, cosine(features.text(r), query)))
        .filter(|&(_, c)| c > SEED_THRESHOLD)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(count);
    scored
}

/// Question words that say what is asked rather than what about; dropping
/// them keeps seeds anchored on the named entity.
const SCAFFOLD: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "to", "for", "by", "with", "from", "and", "or", "is", "are",
    "was", "were", "did", "does", "do", "which", "what", "who", "whom", "where", "when", "how",
    "that", "this", "me", "show", "list", "find", "give", "get", "authored", "wrote", "written",
    "opened", "created", "modified", "changed", "touched", "calls", "called", "defines", "defined",
    "contains", "commit", "commits", "file", "files", "function", "functions", "method", "methods",
    "class", "classes", "pr", "prs", "pull", "request", "requests", "author", "authors",
];

/// The question with scaffolding words removed, or the whole question when
/// nothing else remains.
pub fn seed_text(question: &str) -> String {
    let kept: Vec<&str> = question
        .split(|c: char| c.is_whitespace() || "?!,;:".contains(c))
        .filter(|w| !w.is_empty() && !SCAFFOLD.contains(&w.to_lowercase().as_str()))
        .collect();
    if kept.is_empty() {
        question.to_string()
    } else {
        kept.join(" ")
    }
}

/// One-hop answering: seeds by text similarity to [`seed_text`], candidates among their typed
/// neighbours, ranked by seed rank, then decoder score, then id.
pub fn answer_single_hop(
    graph: &KnowledgeGraph,
    embeddings: &Matrix,
    features: &NodeFeatureMatrix,
    question: &str,
    encoder: &dyn TextEncoder,
    k: usize,
) -> Result<Vec<RankedNode>, DeepGraphError> {
    let q = encode_text(encoder, &seed_text(question));
    let seeds = text_seeds(features, &q, SEED_COUNT);
    if seeds.is_empty() {
        return Err(DeepGraphError::NoSeedFound(question.to_string()));
    }
    let wanted = target_types(question);
    let seed_set: BTreeSet<usize> = seeds.iter().map(|s| s.0).collect();
    let mut seen = BTreeSet::new();
    let mut ranked: Vec<(usize, f64, String, RankedNode)> = Vec::new();
    for (rank, &(s, _)) in seeds.iter().enumerate() {
        let mut hop: Vec<(usize, EdgeType, bool)> = graph
            .out_edges(s)
            .iter()
            .map(|&(t, j)| (j, t, true))
            .chain(graph.in_edges(s).iter().map(|&(t, j)| (j, t, false)))
            .collect();
        hop.sort_by_key(|&(j, t, fwd)| (j, t, !fwd));
        for (j, t, fwd) in hop {
            if j == s || seed_set.contains(&j) && wanted.is_empty() {
                continue;
            }
            if !wanted.is_empty() && !wanted.contains(&graph.node_at(j).node_type) {
                continue;
            }
            if !seen.insert(j) {
                continue;
            }
            let score = SageModel::score(embeddings, s, j);
            let (a, b) = if fwd { (s, j) } else { (j, s) };
            let id = graph.node_at(j).id.clone();
            ranked.push((
                rank,
                score,
                id.clone(),
                RankedNode {
                    id,
                    score,
                    seed: graph.node_at(s).id.clone(),
                    edge: (graph.node_at(a).id.clone(), graph.node_at(b).id.clone(), t),
                },
            ));
        }
    }
    ranked.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    Ok(ranked.into_iter().take(k).map(|r| r.3).collect())
}
