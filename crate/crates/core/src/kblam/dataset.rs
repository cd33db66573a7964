use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deepgraph::{traverse_path, PathPattern, StartFilter};
use crate::kgraph::{Direction, EdgeType, KnowledgeGraph, NodeType};

use super::model::{Window, MAX_HOPS};
use super::KblamError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub center: String,
    pub hops: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaSample {
    pub question: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paraphrases: Vec<String>,
    pub window: WindowSpec,
    pub answers: Vec<String>,
    #[serde(default)]
    pub negatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub repo_id: String,
    pub head_sha: String,
    pub graph_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitSpec {
    train: Vec<usize>,
    val: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<DatasetSource>,
    samples: Vec<QaSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<SplitSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaDataset {
    pub train: Vec<QaSample>,
    pub val: Vec<QaSample>,
    pub source: Option<DatasetSource>,
}

impl QaDataset {
    /// YAML text with samples in train-then-val order and an index split.
    pub fn to_yaml(&self) -> String {
        let n = self.train.len();
        let file = DatasetFile {
            source: self.source.clone(),
            samples: self.train.iter().chain(&self.val).cloned().collect(),
            split: Some(SplitSpec {
                train: (0..n).collect(),
                val: (n..n + self.val.len()).collect(),
            }),
        };
        serde_yaml::to_string(&file).expect("dataset serialises")
    }

    pub fn save(&self, path: &Path) -> Result<(), KblamError> {
        crate::util::write_atomic(path, self.to_yaml().as_bytes()).map_err(|e| KblamError::Io(e.to_string()))
    }
}

fn schema(path: &str, message: impl Into<String>) -> KblamError {
    KblamError::SchemaError { path: path.to_string(), message: message.into() }
}

/// Parses and validates dataset text against `graph`. `origin` names the
/// source in error messages.
pub fn parse_dataset(text: &str, origin: &str, graph: &KnowledgeGraph) -> Result<QaDataset, KblamError> {
    let file: DatasetFile = serde_yaml::from_str(text).map_err(|e| schema(origin, e.to_string()))?;
    let n = file.samples.len();
    let (train_idx, val_idx) = match &file.split {
        Some(s) => (s.train.clone(), s.val.clone()),
        None => ((0..n).collect(), Vec::new()),
    };
    let mut seen = BTreeSet::new();
    for &i in train_idx.iter().chain(&val_idx) {
        if i >= n {
            return Err(schema(origin, format!("split: index {i} out of range for {n} samples")));
        }
        if !seen.insert(i) {
            return Err(schema(origin, format!("split: sample {i} listed twice")));
        }
    }
    let mut dangling = BTreeSet::new();
    for (i, s) in file.samples.iter().enumerate() {
        let at = |field: &str| format!("samples[{i}].{field}");
        if s.question.trim().is_empty() {
            return Err(schema(origin, format!("{}: empty question", at("question"))));
        }
        if s.answers.is_empty() {
            return Err(schema(origin, format!("{}: at least one answer is required", at("answers"))));
        }
        if s.window.hops > MAX_HOPS {
            return Err(schema(origin, format!("{}: {} exceeds {MAX_HOPS}", at("window.hops"), s.window.hops)));
        }
        if let Some(both) = s.answers.iter().find(|a| s.negatives.contains(a)) {
            return Err(schema(origin, format!("{}: `{both}` is also an answer", at("negatives"))));
        }
        for id in std::iter::once(&s.window.center).chain(&s.answers).chain(&s.negatives) {
            if graph.index_of(id).is_none() {
                dangling.insert(id.clone());
            }
        }
    }
    if !dangling.is_empty() {
        return Err(KblamError::DanglingNodeRef { ids: dangling.into_iter().collect() });
    }
    for s in &file.samples {
        let window = Window::expand(graph, &s.window.center, s.window.hops)?;
        let outside: Vec<String> = s
            .answers
            .iter()
            .chain(&s.negatives)
            .filter(|id| graph.index_of(id).and_then(|g| window.local_of(g)).is_none())
            .cloned()
            .collect();
        if !outside.is_empty() {
            return Err(KblamError::OutsideWindow { question: s.question.clone(), ids: outside });
        }
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| file.samples[i].clone()).collect();
    Ok(QaDataset { train: pick(&train_idx), val: pick(&val_idx), source: file.source })
}

pub fn load_dataset(path: &Path, graph: &KnowledgeGraph) -> Result<QaDataset, KblamError> {
    let text = std::fs::read_to_string(path).map_err(|e| KblamError::Io(format!("{}: {e}", path.display())))?;
    parse_dataset(&text, &path.display().to_string(), graph)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateConfig {
    /// Template names to instantiate; every listed template must apply.
    pub templates: Vec<String>,
    pub negatives: usize,
    /// Framings prepended to every phrasing.
    pub prefixes: Vec<String>,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            templates: TEMPLATES.iter().map(|t| t.name.to_string()).collect(),
            negatives: 5,
            prefixes: ["", "Tell me: ", "Quick question: ", "Can you check: "].map(String::from).to_vec(),
        }
    }
}

/// Where a template draws its entity from.
#[derive(Clone, Copy)]
enum Entity {
    CommitSha,
    PrNumber,
    FilePath,
    FunctionName,
    /// No entity in the text; every commit serves as a window center.
    None,
}

struct Template {
    name: &'static str,
    phrasings: [&'static str; 3],
    entity: Entity,
    steps: &'static [(EdgeType, Direction)],
    end: NodeType,
    hops: usize,
}

use Direction::{Forward as F, Reverse as R};
use EdgeType as E;

const TEMPLATES: &[Template] = &[
    Template {
        name: "commit_author",
        phrasings: ["Who authored commit {e}?", "Which author wrote commit {e}?", "Who is the author of commit {e}?"],
        entity: Entity::CommitSha,
        steps: &[(E::AuthoredBy, F)],
        end: NodeType::Author,
        hops: 1,
    },
    Template {
        name: "commit_files",
        phrasings: ["Which files did commit {e} modify?", "What files were changed in commit {e}?", "List the files touched by commit {e}."],
        entity: Entity::CommitSha,
        steps: &[(E::Modifies, F)],
        end: NodeType::File,
        hops: 1,
    },
    Template {
        name: "commit_prs",
        phrasings: ["Which pull request includes commit {e}?", "What PR contains commit {e}?", "Commit {e} was merged through which pull request?"],
        entity: Entity::CommitSha,
        steps: &[(E::Includes, R)],
        end: NodeType::PullRequest,
        hops: 1,
    },
    Template {
        name: "pr_commits",
        phrasings: ["Which commits are included in PR #{e}?", "What commits belong to pull request #{e}?", "List the commits of PR #{e}."],
        entity: Entity::PrNumber,
        steps: &[(E::Includes, F)],
        end: NodeType::Commit,
        hops: 1,
    },
    Template {
        name: "pr_functions",
        phrasings: [
            "Which functions were modified by commits in PR #{e}?",
            "What functions did the commits of pull request #{e} touch?",
            "Which functions were changed by commits in PR #{e}?",
        ],
        entity: Entity::PrNumber,
        steps: &[(E::Includes, F), (E::Modifies, F), (E::Contains, F)],
        end: NodeType::Function,
        hops: 3,
    },
    Template {
        name: "file_functions",
        phrasings: ["Which functions are defined in {e}?", "What functions does {e} contain?", "List the functions in {e}."],
        entity: Entity::FilePath,
        steps: &[(E::Contains, F)],
        end: NodeType::Function,
        hops: 1,
    },
    Template {
        name: "file_authors",
        phrasings: ["Who modified {e}?", "Which authors changed {e}?", "Who has worked on {e}?"],
        entity: Entity::FilePath,
        steps: &[(E::Modifies, R), (E::AuthoredBy, F)],
        end: NodeType::Author,
        hops: 2,
    },
    Template {
        name: "function_file",
        phrasings: ["Which file defines {e}?", "In which file is {e} defined?", "Where is {e} declared?"],
        entity: Entity::FunctionName,
        steps: &[(E::Contains, R)],
        end: NodeType::File,
        hops: 1,
    },
    Template {
        name: "function_callees",
        phrasings: ["Which functions does {e} call?", "What does {e} call?", "List the callees of {e}."],
        entity: Entity::FunctionName,
        steps: &[(E::Calls, F)],
        end: NodeType::Function,
        hops: 1,
    },
    Template {
        name: "top_author",
        phrasings: [
            "Which author made the most commits?",
            "Who committed most often?",
            "Which developer has the highest number of commits?",
        ],
        entity: Entity::None,
        steps: &[(E::AuthoredBy, F)],
        end: NodeType::Author,
        hops: 3,
    },
];

/// (text shown in the question, center node id)
fn entities(graph: &KnowledgeGraph, kind: Entity) -> Vec<(String, String)> {
    let of_type = |t: NodeType| graph.nodes().iter().filter(move |n| n.node_type == t);
    match kind {
        Entity::CommitSha | Entity::None => of_type(NodeType::Commit)
            .filter_map(|n| n.attr_str("sha").map(|s| (s[..s.len().min(7)].to_string(), n.id.clone())))
            .collect(),
        Entity::PrNumber => of_type(NodeType::PullRequest)
            .filter_map(|n| n.id.strip_prefix("pr:#").map(|num| (num.to_string(), n.id.clone())))
            .collect(),
        Entity::FilePath => of_type(NodeType::File)
            .filter_map(|n| n.id.strip_prefix("file:").map(|p| (p.to_string(), n.id.clone())))
            .collect(),
        Entity::FunctionName => {
            let internal: Vec<_> = of_type(NodeType::Function)
                .filter(|n| n.attr("external").and_then(|v| v.as_bool()) != Some(true))
                .collect();
            let mut count: BTreeMap<&str, usize> = BTreeMap::new();
            for n in &internal {
                *count.entry(n.label.as_str()).or_default() += 1;
            }
            internal
                .iter()
                .filter(|n| count[n.label.as_str()] == 1)
                .map(|n| (n.label.clone(), n.id.clone()))
                .collect()
        }
    }
}

fn walk(graph: &KnowledgeGraph, start: &str, t: &Template) -> Result<Vec<String>, KblamError> {
    let pattern = PathPattern::new(StartFilter::Ids(vec![start.to_string()]), t.steps.to_vec(), t.end);
    let hits = traverse_path(graph, &pattern).map_err(|e| KblamError::InsufficientStructure(e.to_string()))?;
    Ok(hits.into_iter().map(|h| h.node).collect())
}

struct Instance {
    template: &'static Template,
    entity_text: String,
    center: String,
    answers: Vec<String>,
}

fn instances(graph: &KnowledgeGraph, t: &'static Template) -> Result<Vec<Instance>, KblamError> {
    let mut out = Vec::new();
    if let Entity::None = t.entity {
        // the author with strictly the most commits, each commit counted once
        let mut commits: BTreeMap<String, usize> = BTreeMap::new();
        for (_, commit) in entities(graph, Entity::CommitSha) {
            for a in walk(graph, &commit, t)? {
                *commits.entry(a).or_default() += 1;
            }
        }
        let Some(&top) = commits.values().max() else { return Ok(out) };
        let leaders: Vec<&String> = commits.iter().filter(|(_, &c)| c == top).map(|(a, _)| a).collect();
        if leaders.len() != 1 {
            return Ok(out);
        }
        for (_, center) in entities(graph, Entity::None) {
            out.push(Instance { template: t, entity_text: String::new(), center, answers: vec![leaders[0].clone()] });
        }
        return Ok(out);
    }
    for (text, center) in entities(graph, t.entity) {
        let answers = walk(graph, &center, t)?;
        if !answers.is_empty() {
            out.push(Instance { template: t, entity_text: text, center, answers });
        }
    }
    Ok(out)
}

/// Instantiates question templates over `graph`. Answers come from
/// [`traverse_path`]; negatives are window nodes outside the answer set,
/// same-typed ones first. Deterministic under `seed`.
pub fn generate_dataset(
    graph: &KnowledgeGraph,
    config: &TemplateConfig,
    sizes: (usize, usize),
    seed: u64,
) -> Result<QaDataset, KblamError> {
    let mut pool: Vec<(usize, usize)> = Vec::new();
    let mut all = Vec::new();
    for name in &config.templates {
        let t = TEMPLATES
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| KblamError::InvalidConfig(format!("unknown template `{name}`")))?;
        let found = instances(graph, t)?;
        if found.is_empty() {
            return Err(KblamError::InsufficientStructure(format!("template `{name}` has no instances")));
        }
        all.extend(found);
    }
    let prefixes: Vec<&str> = if config.prefixes.is_empty() { vec![""] } else { config.prefixes.iter().map(String::as_str).collect() };
    for i in 0..all.len() {
        for j in 0..3 * prefixes.len() {
            pool.push((i, j));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let wanted = sizes.0 + sizes.1;
    if pool.len() < wanted {
        return Err(KblamError::InsufficientStructure(format!(
            "only {} distinct questions available for {wanted} samples",
            pool.len()
        )));
    }
    let mut samples = Vec::with_capacity(wanted);
    for &(i, j) in pool.iter().take(wanted) {
        let inst = &all[i];
        let t = inst.template;
        let (phrase, prefix) = (j % 3, prefixes[j / 3]);
        let render = |p: usize| t.phrasings[p].replace("{e}", &inst.entity_text);
        let question = format!("{prefix}{}", render(phrase));
        let paraphrases = (0..3).filter(|&p| p != phrase).map(render).collect();
        let window = Window::expand(graph, &inst.center, t.hops)?;
        let mut answers = inst.answers.clone();
        answers.sort();
        let answer_types: BTreeSet<NodeType> =
            answers.iter().filter_map(|a| graph.node(a)).map(|n| n.node_type).collect();
        let mut same: Vec<String> = Vec::new();
        let mut other: Vec<String> = Vec::new();
        for &g in &window.nodes {
            let node = graph.node_at(g);
            if answers.contains(&node.id) {
                continue;
            }
            if answer_types.contains(&node.node_type) {
                same.push(node.id.clone());
            } else {
                other.push(node.id.clone());
            }
        }
        same.shuffle(&mut rng);
        other.shuffle(&mut rng);
        let mut negatives: Vec<String> = same.into_iter().chain(other).take(config.negatives).collect();
        negatives.sort();
        samples.push(QaSample {
            question,
            paraphrases,
            window: WindowSpec { center: inst.center.clone(), hops: t.hops },
            answers,
            negatives,
            template: Some(t.name.to_string()),
        });
    }
    let val = samples.split_off(sizes.0);
    Ok(QaDataset {
        train: samples,
        val,
        source: Some(DatasetSource {
            repo_id: graph.provenance.repo_id.clone(),
            head_sha: graph.provenance.head_sha.clone(),
            graph_version: graph.version,
        }),
    })
}

/// Names of the built-in templates.
pub fn template_names() -> Vec<&'static str> {
    TEMPLATES.iter().map(|t| t.name).collect()
}
