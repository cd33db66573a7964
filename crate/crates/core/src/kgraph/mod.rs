//! Typed heterogeneous property graph built from a [`RepoSnapshot`].
//!
//! [`RepoSnapshot`]: crate::ingest::RepoSnapshot

mod build;
mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{apply_delta, apply_delta_with, build_graph, build_graph_with, BuildOptions};
pub use io::{export_graphml, export_json, graph_from_json, graph_to_json, import_json, write_graphml};

/// Version of the graph JSON layout.
pub const GRAPH_SCHEMA_VERSION: u32 = 1;

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($name))),
                }
            }
        }
    };
}

string_enum!(NodeType {
    File => "File",
    Function => "Function",
    Class => "Class",
    Docstring => "Docstring",
    ReturnType => "ReturnType",
    Decorator => "Decorator",
    ControlFlow => "ControlFlow",
    TryExcept => "TryExcept",
    Import => "Import",
    StringConstant => "StringConstant",
    ComplexityMetric => "ComplexityMetric",
    PullRequest => "PullRequest",
    Commit => "Commit",
    User => "User",
    Author => "Author",
    Component => "Component",
});

string_enum!(EdgeType {
    Contains => "CONTAINS",
    Calls => "CALLS",
    HasDocstring => "HAS_DOCSTRING",
    Returns => "RETURNS",
    DecoratedBy => "DECORATED_BY",
    HasControlFlow => "HAS_CONTROL_FLOW",
    HasTryExcept => "HAS_TRY_EXCEPT",
    Imports => "IMPORTS",
    HasString => "HAS_STRING",
    HasComplexity => "HAS_COMPLEXITY",
    Modifies => "MODIFIES",
    Includes => "INCLUDES",
    AuthoredBy => "AUTHORED_BY",
    OpenedBy => "OPENED_BY",
    MemberOf => "MEMBER_OF",
});

impl EdgeType {
    /// Whether `src -[self]-> dst` is allowed by the schema.
    pub fn allows(self, src: NodeType, dst: NodeType) -> bool {
        use NodeType as N;
        match self {
            EdgeType::Contains => matches!(
                (src, dst),
                (N::File, N::Function) | (N::File, N::Class) | (N::Class, N::Function)
            ),
            EdgeType::Calls => src == N::Function && dst == N::Function,
            EdgeType::HasDocstring => {
                matches!(src, N::File | N::Class | N::Function) && dst == N::Docstring
            }
            EdgeType::Returns => src == N::Function && dst == N::ReturnType,
            EdgeType::DecoratedBy => matches!(src, N::Function | N::Class) && dst == N::Decorator,
            EdgeType::HasControlFlow => src == N::Function && dst == N::ControlFlow,
            EdgeType::HasTryExcept => src == N::Function && dst == N::TryExcept,
            EdgeType::Imports => src == N::File && dst == N::Import,
            EdgeType::HasString => matches!(src, N::File | N::Function) && dst == N::StringConstant,
            EdgeType::HasComplexity => src == N::Function && dst == N::ComplexityMetric,
            EdgeType::Modifies => src == N::Commit && dst == N::File,
            EdgeType::Includes => src == N::PullRequest && dst == N::Commit,
            EdgeType::AuthoredBy => src == N::Commit && dst == N::Author,
            EdgeType::OpenedBy => src == N::PullRequest && dst == N::User,
            EdgeType::MemberOf => dst == N::Component && src != N::Component,
        }
    }

    /// Source and target types that may appear on this edge.
    pub fn endpoint_types(self) -> (Vec<NodeType>, Vec<NodeType>) {
        let mut srcs = BTreeSet::new();
        let mut dsts = BTreeSet::new();
        for &s in NodeType::ALL {
            for &d in NodeType::ALL {
                if self.allows(s, d) {
                    srcs.insert(s);
                    dsts.insert(d);
                }
            }
        }
        (srcs.into_iter().collect(), dsts.into_iter().collect())
    }
}

/// Scalar attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl AttrValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttrValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Int(v) => Some(*v as f64),
            AttrValue::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AttrValue::Bool(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<&str> for AttrValue {
    fn from(v: &str) -> Self {
        AttrValue::Str(v.to_string())
    }
}
impl From<String> for AttrValue {
    fn from(v: String) -> Self {
        AttrValue::Str(v)
    }
}
impl From<bool> for AttrValue {
    fn from(v: bool) -> Self {
        AttrValue::Bool(v)
    }
}
impl From<i64> for AttrValue {
    fn from(v: i64) -> Self {
        AttrValue::Int(v)
    }
}
impl From<u32> for AttrValue {
    fn from(v: u32) -> Self {
        AttrValue::Int(v as i64)
    }
}
impl From<usize> for AttrValue {
    fn from(v: usize) -> Self {
        AttrValue::Int(v as i64)
    }
}
impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Float(v)
    }
}

pub type Attrs = BTreeMap<String, AttrValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub label: String,
    #[serde(default)]
    pub attrs: Attrs,
}

impl Node {
    pub fn new(id: impl Into<String>, node_type: NodeType, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            node_type,
            label: label.into(),
            attrs: Attrs::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<AttrValue>) -> Self {
        self.attrs.insert(key.to_string(), value.into());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&AttrValue> {
        self.attrs.get(key)
    }

    pub fn attr_str(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).and_then(AttrValue::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub src: String,
    pub dst: String,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
    #[serde(default)]
    pub attrs: Attrs,
}

impl Edge {
    pub fn key(&self) -> EdgeKey {
        EdgeKey {
            src: self.src.clone(),
            dst: self.dst.clone(),
            edge_type: self.edge_type,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub repo_id: String,
    pub head_sha: String,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unsupported schema version {found} (supported: {supported})")]
    SchemaMismatch { found: u32, supported: u32 },
    #[error("graph belongs to `{expected}` but snapshot is for `{found}`")]
    ProvenanceMismatch { expected: String, found: String },
    #[error("malformed graph file at line {line}, column {column}: {message}")]
    MalformedGraphFile {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("edge {src} -[{edge_type}]-> {dst} references a missing node")]
    DanglingEdge {
        src: String,
        dst: String,
        edge_type: EdgeType,
    },
    #[error("edge {src} -[{edge_type}]-> {dst} violates the schema ({src_type} -> {dst_type})")]
    SchemaViolation {
        src: String,
        dst: String,
        edge_type: EdgeType,
        src_type: NodeType,
        dst_type: NodeType,
    },
    #[error("duplicate node id {0}")]
    DuplicateNode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Direction of an adjacency entry relative to the node it is stored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

/// Immutable knowledge graph. Nodes are kept sorted by id and edges by
/// `(src, dst, type)`; adjacency lists refer to node positions.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub version: u64,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    pos: HashMap<String, usize>,
    out_adj: Vec<Vec<(EdgeType, usize)>>,
    in_adj: Vec<Vec<(EdgeType, usize)>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.structurally_equal(other)
    }
}

impl KnowledgeGraph {
    pub fn empty(provenance: Provenance) -> Self {
        Self::from_parts(provenance, 0, Vec::new(), Vec::new()).expect("empty graph is valid")
    }

    /// Assembles a graph, sorting its parts and checking referential
    /// integrity and endpoint types.
    pub fn from_parts(
        provenance: Provenance,
        version: u64,
        mut nodes: Vec<Node>,
        mut edges: Vec<Edge>,
    ) -> Result<Self, GraphError> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        for w in nodes.windows(2) {
            if w[0].id == w[1].id {
                return Err(GraphError::DuplicateNode(w[0].id.clone()));
            }
        }
        edges.sort_by(|a, b| {
            (&a.src, &a.dst, a.edge_type).cmp(&(&b.src, &b.dst, b.edge_type))
        });
        edges.dedup_by(|a, b| a.src == b.src && a.dst == b.dst && a.edge_type == b.edge_type);
        let pos: HashMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let mut out_adj = vec![Vec::new(); nodes.len()];
        let mut in_adj = vec![Vec::new(); nodes.len()];
        for e in &edges {
            let (Some(&s), Some(&d)) = (pos.get(&e.src), pos.get(&e.dst)) else {
                return Err(GraphError::DanglingEdge {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    edge_type: e.edge_type,
                });
            };
            let (st, dt) = (nodes[s].node_type, nodes[d].node_type);
            if !e.edge_type.allows(st, dt) {
                return Err(GraphError::SchemaViolation {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    edge_type: e.edge_type,
                    src_type: st,
                    dst_type: dt,
                });
            }
            out_adj[s].push((e.edge_type, d));
            in_adj[d].push((e.edge_type, s));
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_by_key(|&(t, i)| (i, t));
        }
        Ok(Self {
            schema_version: GRAPH_SCHEMA_VERSION,
            provenance,
            version,
            nodes,
            edges,
            pos,
            out_adj,
            in_adj,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.pos.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_at(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn edge(&self, src: &str, dst: &str, edge_type: EdgeType) -> Option<&Edge> {
        self.edges
            .binary_search_by(|e| (e.src.as_str(), e.dst.as_str(), e.edge_type).cmp(&(src, dst, edge_type)))
            .ok()
            .map(|i| &self.edges[i])
    }

    /// Outgoing `(edge type, target position)` pairs, sorted by target.
    pub fn out_edges(&self, i: usize) -> &[(EdgeType, usize)] {
        &self.out_adj[i]
    }

    /// Incoming `(edge type, source position)` pairs, sorted by source.
    pub fn in_edges(&self, i: usize) -> &[(EdgeType, usize)] {
        &self.in_adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.out_adj[i].len() + self.in_adj[i].len()
    }

    /// Distinct neighbours in the undirected view, ascending, self excluded.
    pub fn undirected_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.out_adj[i]
            .iter()
            .chain(&self.in_adj[i])
            .map(|&(_, j)| j)
            .filter(|&j| j != i)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Undirected adjacency lists for every node.
    pub fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.nodes.len())
            .map(|i| self.undirected_neighbors(i))
            .collect()
    }

    /// Same node ids, types, labels, attrs, edges and provenance; the
    /// version counter is ignored.
    pub fn structurally_equal(&self, other: &Self) -> bool {
        self.schema_version == other.schema_version
            && self.provenance == other.provenance
            && self.nodes == other.nodes
            && self.edges == other.edges
    }

    pub fn stats(&self) -> GraphStats {
        stats(self)
    }

    /// Breadth-first layers over the undirected view, starting at `center`.
    /// Layer 0 is the center itself; each layer is sorted by node id.
    pub fn bfs_layers(&self, center: usize, hops: usize) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.nodes.len()];
        seen[center] = true;
        let mut layers = vec![vec![center]];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &u in layers.last().expect("non-empty") {
                for v in self.undirected_neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            next.sort_unstable();
            layers.push(next);
        }
        layers
    }

    /// Nodes within `hops` of `center` in BFS order, truncated to `limit`.
    pub fn neighborhood(&self, center: usize, hops: usize, limit: Option<usize>) -> Vec<usize> {
        let mut out: Vec<usize> = self.bfs_layers(center, hops).into_iter().flatten().collect();
        if let Some(limit) = limit {
            out.truncate(limit.max(1));
        }
        out
    }

    /// Induced fragment over the given nodes (edges among them only).
    pub fn fragment(&self, members: &[usize]) -> GraphFragment {
        let set: BTreeSet<usize> = members.iter().copied().collect();
        let nodes: Vec<Node> = set.iter().map(|&i| self.nodes[i].clone()).collect();
        let mut edges = Vec::new();
        for &i in &set {
            for &(t, j) in &self.out_adj[i] {
                if set.contains(&j) {
                    let e = self
                        .edge(&self.nodes[i].id, &self.nodes[j].id, t)
                        .expect("adjacency mirrors edge list");
                    edges.push(e.clone());
                }
            }
        }
        edges.sort_by(|a, b| (&a.src, &a.dst, a.edge_type).cmp(&(&b.src, &b.dst, b.edge_type)));
        GraphFragment { nodes, edges }
    }

    /// Referential integrity of the stored parts. Construction already
    /// enforces it, so this is a cheap re-check for tests and tooling.
    pub fn check_integrity(&self) -> Result<(), GraphError> {
        Self::from_parts(
            self.provenance.clone(),
            self.version,
            self.nodes.clone(),
            self.edges.clone(),
        )
        .map(|_| ())
    }

    pub(crate) fn into_parts(self) -> (Vec<Node>, Vec<Edge>) {
        (self.nodes, self.edges)
    }
}

/// A referentially closed piece of a graph, as served to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GraphFragment {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl GraphFragment {
    pub fn is_closed(&self) -> bool {
        let ids: BTreeSet<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();
        self.edges
            .iter()
            .all(|e| ids.contains(e.src.as_str()) && ids.contains(e.dst.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub total_nodes: usize,
    pub total_edges: usize,
    pub nodes_by_type: BTreeMap<String, usize>,
    pub edges_by_type: BTreeMap<String, usize>,
}

impl GraphStats {
    pub fn nodes_of(&self, t: NodeType) -> usize {
        self.nodes_by_type.get(t.as_str()).copied().unwrap_or(0)
    }

    pub fn edges_of(&self, t: EdgeType) -> usize {
        self.edges_by_type.get(t.as_str()).copied().unwrap_or(0)
    }
}

/// Counts by node and edge type; every type is present, zero or not.
pub fn stats(graph: &KnowledgeGraph) -> GraphStats {
    let mut nodes_by_type: BTreeMap<String, usize> =
        NodeType::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect();
    let mut edges_by_type: BTreeMap<String, usize> =
        EdgeType::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect();
    for n in &graph.nodes {
        *nodes_by_type.get_mut(n.node_type.as_str()).expect("all types seeded") += 1;
    }
    for e in &graph.edges {
        *edges_by_type.get_mut(e.edge_type.as_str()).expect("all types seeded") += 1;
    }
    GraphStats {
        total_nodes: graph.nodes.len(),
        total_edges: graph.edges.len(),
        nodes_by_type,
        edges_by_type,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DeltaReport {
    pub added_nodes: Vec<String>,
    pub removed_nodes: Vec<String>,
    /// Nodes present before and after whose label or attrs changed.
    pub updated_nodes: Vec<String>,
    pub added_edges: Vec<EdgeKey>,
    pub removed_edges: Vec<EdgeKey>,
    pub changed_files: Vec<String>,
}

impl DeltaReport {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.removed_nodes.is_empty()
            && self.updated_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
            && self.changed_files.is_empty()
    }

    /// Set difference between two graphs.
    pub fn between(old: &KnowledgeGraph, new: &KnowledgeGraph, changed_files: Vec<String>) -> Self {
        let mut report = DeltaReport {
            changed_files,
            ..Default::default()
        };
        for n in &new.nodes {
            match old.node(&n.id) {
                None => report.added_nodes.push(n.id.clone()),
                Some(o) if o != n => report.updated_nodes.push(n.id.clone()),
                Some(_) => {}
            }
        }
        for n in &old.nodes {
            if new.index_of(&n.id).is_none() {
                report.removed_nodes.push(n.id.clone());
            }
        }
        for e in &new.edges {
            if old.edge(&e.src, &e.dst, e.edge_type).is_none() {
                report.added_edges.push(e.key());
            }
        }
        for e in &old.edges {
            if new.edge(&e.src, &e.dst, e.edge_type).is_none() {
                report.removed_edges.push(e.key());
            }
        }
        report
    }
}

/// Neighbours of `i` over `edge_type` in `dir`.
pub fn typed_step(
    graph: &KnowledgeGraph,
    i: usize,
    edge_type: EdgeType,
    dir: Direction,
) -> impl Iterator<Item = usize> + '_ {
    let list = match dir {
        Direction::Forward => graph.out_edges(i),
        Direction::Reverse => graph.in_edges(i),
    };
    list.iter()
        .filter(move |&&(t, _)| t == edge_type)
        .map(|&(_, j)| j)
}

/// Breadth-first search returning a shortest undirected path of node
/// positions from `from` to `to`, if any.
pub fn shortest_path(graph: &KnowledgeGraph, from: usize, to: usize) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; graph.node_count()];
    let mut queue = VecDeque::from([from]);
    prev[from] = from;
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        for v in graph.undirected_neighbors(u) {
            if prev[v] == usize::MAX {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    None
}
