use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ingest::{commit_identity, ChangeKind, FunctionInfo, ParsedFile, PrState, RepoSnapshot, SNAPSHOT_SCHEMA_VERSION};
use crate::util::fnv1a64;

use super::{
    Attrs, DeltaReport, Edge, EdgeKey, EdgeType, GraphError, KnowledgeGraph, Node, NodeType,
    Provenance,
};

const LABEL_LIMIT: usize = 80;
pub(crate) const EXTERNAL_PREFIX: &str = "function:external::";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Compute the Component layer.
    pub components: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { components: true }
    }
}

/// Mutable staging area; every layer writes here and [`finish`] validates.
#[derive(Default)]
struct Staging {
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<EdgeKey, Attrs>,
}

impl Staging {
    fn from_graph(g: KnowledgeGraph) -> Self {
        let (nodes, edges) = g.into_parts();
        Self {
            nodes: nodes.into_iter().map(|n| (n.id.clone(), n)).collect(),
            edges: edges
                .into_iter()
                .map(|e| {
                    let key = e.key();
                    (key, e.attrs)
                })
                .collect(),
        }
    }

    fn node(&mut self, n: Node) {
        self.nodes.insert(n.id.clone(), n);
    }

    fn edge(&mut self, src: &str, dst: &str, t: EdgeType) {
        self.edge_with(src, dst, t, Attrs::new());
    }

    fn edge_with(&mut self, src: &str, dst: &str, t: EdgeType, attrs: Attrs) {
        self.edges.insert(
            EdgeKey {
                src: src.to_string(),
                dst: dst.to_string(),
                edge_type: t,
            },
            attrs,
        );
    }

    fn remove_nodes_where(&mut self, pred: impl Fn(&Node) -> bool) {
        let doomed: BTreeSet<String> = self
            .nodes
            .values()
            .filter(|n| pred(n))
            .map(|n| n.id.clone())
            .collect();
        if doomed.is_empty() {
            return;
        }
        self.nodes.retain(|id, _| !doomed.contains(id));
        self.edges
            .retain(|k, _| !doomed.contains(&k.src) && !doomed.contains(&k.dst));
    }

    fn remove_edges_where(&mut self, pred: impl Fn(&EdgeKey) -> bool) {
        self.edges.retain(|k, _| !pred(k));
    }

    fn finish(self, provenance: Provenance, version: u64) -> Result<KnowledgeGraph, GraphError> {
        let nodes = self.nodes.into_values().collect();
        let edges = self
            .edges
            .into_iter()
            .map(|(k, attrs)| Edge {
                src: k.src,
                dst: k.dst,
                edge_type: k.edge_type,
                attrs,
            })
            .collect();
        KnowledgeGraph::from_parts(provenance, version, nodes, edges)
    }
}

fn truncate(s: &str) -> String {
    let first = s.lines().next().unwrap_or("").trim();
    if first.chars().count() <= LABEL_LIMIT {
        first.to_string()
    } else {
        let mut out: String = first.chars().take(LABEL_LIMIT - 1).collect();
        out.push('…');
        out
    }
}

/// Stable digest of a parsed file, used for delta detection.
pub(crate) fn content_hash(file: &ParsedFile) -> String {
    let json = serde_json::to_string(file).expect("parsed file serialises");
    format!("{:016x}", fnv1a64(json.as_bytes()))
}

pub(crate) fn file_id(path: &str) -> String {
    format!("file:{path}")
}

pub(crate) fn function_id(qname: &str) -> String {
    format!("function:{qname}")
}

fn stub_id(callee: &str) -> String {
    format!("{EXTERNAL_PREFIX}{callee}")
}

/// Adds every node and edge owned by one file: the File node, its
/// definitions and attribute nodes, and CALLS edges (stub targets are
/// recorded in `stubs` but not created here).
fn add_file(st: &mut Staging, file: &ParsedFile, stubs: &mut BTreeSet<String>) {
    let path = file.path.as_str();
    let fid = file_id(path);
    let mut fnode = Node::new(&fid, NodeType::File, path)
        .with("file", path)
        .with("path", path)
        .with("line_count", file.line_count)
        .with("content_hash", content_hash(file))
        .with("parse_failed", file.parse_failed)
        .with("functions", file.all_functions().count())
        .with("classes", file.classes.len());
    if let Some(doc) = &file.module_docstring {
        fnode = fnode.with("docstring", doc.as_str());
    }
    st.node(fnode);

    if let Some(doc) = &file.module_docstring {
        add_docstring(st, path, path, &fid, doc);
    }
    for target in &file.imports {
        let id = format!("import:{path}::{target}");
        st.node(
            Node::new(&id, NodeType::Import, target.as_str())
                .with("file", path)
                .with("target", target.as_str()),
        );
        st.edge(&fid, &id, EdgeType::Imports);
    }
    add_strings(st, path, path, &fid, &file.string_constants);

    // name -> qualified names, for file-local call resolution
    let mut by_name: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut method_owner: HashMap<&str, &str> = HashMap::new();
    for f in &file.functions {
        by_name.entry(f.name.as_str()).or_default().push(&f.qualified_name);
    }
    for c in &file.classes {
        for m in &c.methods {
            by_name.entry(m.name.as_str()).or_default().push(&m.qualified_name);
            method_owner.insert(&m.qualified_name, &c.qualified_name);
        }
    }
    for list in by_name.values_mut() {
        list.sort_unstable();
    }
    let resolver = Resolver {
        path,
        by_name: &by_name,
        method_owner: &method_owner,
    };

    for f in &file.functions {
        add_function(st, path, f, &resolver, stubs);
        st.edge(&fid, &function_id(&f.qualified_name), EdgeType::Contains);
    }
    for c in &file.classes {
        let cid = format!("class:{}", c.qualified_name);
        let mut cnode = Node::new(&cid, NodeType::Class, c.name.as_str())
            .with("file", path)
            .with("qualified_name", c.qualified_name.as_str())
            .with("bases", c.bases.join(", "))
            .with("methods", c.methods.len())
            .with("start_line", c.start_line)
            .with("end_line", c.end_line);
        if let Some(doc) = &c.docstring {
            cnode = cnode.with("docstring", doc.as_str());
        }
        if !c.decorators.is_empty() {
            cnode = cnode.with("decorators", c.decorators.join("\n"));
        }
        st.node(cnode);
        st.edge(&fid, &cid, EdgeType::Contains);
        if let Some(doc) = &c.docstring {
            add_docstring(st, path, &c.qualified_name, &cid, doc);
        }
        add_decorators(st, path, &c.qualified_name, &cid, &c.decorators);
        for m in &c.methods {
            add_function(st, path, m, &resolver, stubs);
            st.edge(&cid, &function_id(&m.qualified_name), EdgeType::Contains);
        }
    }
}

struct Resolver<'a> {
    path: &'a str,
    by_name: &'a HashMap<&'a str, Vec<&'a str>>,
    method_owner: &'a HashMap<&'a str, &'a str>,
}

impl Resolver<'_> {
    /// Qualified name of the in-file target of `callee`, if any.
    fn resolve(&self, caller: &str, callee: &str) -> Option<String> {
        let last = callee.rsplit('.').next().unwrap_or(callee);
        let candidates = self.by_name.get(last)?;
        let receiver = callee.strip_suffix(last).and_then(|r| r.strip_suffix('.'));
        if matches!(receiver, Some("self") | Some("cls")) {
            if let Some(owner) = self.method_owner.get(caller) {
                let own = format!("{owner}::{last}");
                if candidates.iter().any(|c| *c == own) {
                    return Some(own);
                }
            }
        }
        if receiver.is_none() {
            let module_level = format!("{}::{last}", self.path);
            if candidates.iter().any(|c| *c == module_level) {
                return Some(module_level);
            }
        }
        candidates.first().map(|c| c.to_string())
    }
}

fn add_function(
    st: &mut Staging,
    path: &str,
    f: &FunctionInfo,
    resolver: &Resolver<'_>,
    stubs: &mut BTreeSet<String>,
) {
    let q = f.qualified_name.as_str();
    let id = function_id(q);
    let param_names: Vec<String> = f
        .params
        .iter()
        .map(|p| match &p.annotation {
            Some(a) => format!("{}: {a}", p.name),
            None => p.name.clone(),
        })
        .collect();
    let mut node = Node::new(&id, NodeType::Function, f.name.as_str())
        .with("file", path)
        .with("qualified_name", q)
        .with("external", false)
        .with("is_async", f.is_async)
        .with("params", f.params.len())
        .with("param_names", param_names.join(", "))
        .with("complexity", f.complexity)
        .with("code_length", f.code_length)
        .with("start_line", f.start_line)
        .with("end_line", f.end_line)
        .with("assignments", f.assignments)
        .with("lambdas", f.lambdas)
        .with("comprehensions", f.comprehensions)
        .with("calls", f.calls.len())
        .with("try_except_blocks", f.try_except_blocks);
    if let Some(doc) = &f.docstring {
        node = node.with("docstring", doc.as_str());
    }
    if let Some(ret) = &f.return_annotation {
        node = node.with("return_annotation", ret.as_str());
    }
    if !f.decorators.is_empty() {
        node = node.with("decorators", f.decorators.join("\n"));
    }
    st.node(node);

    if let Some(doc) = &f.docstring {
        add_docstring(st, path, q, &id, doc);
    }
    if let Some(ret) = &f.return_annotation {
        let rid = format!("returns:{q}");
        st.node(
            Node::new(&rid, NodeType::ReturnType, ret.as_str())
                .with("file", path)
                .with("text", ret.as_str()),
        );
        st.edge(&id, &rid, EdgeType::Returns);
    }
    add_decorators(st, path, q, &id, &f.decorators);
    for (i, kind) in f.control_flow.iter().enumerate() {
        let cid = format!("control:{q}#{i}");
        st.node(
            Node::new(&cid, NodeType::ControlFlow, kind.as_str())
                .with("file", path)
                .with("kind", kind.as_str()),
        );
        st.edge(&id, &cid, EdgeType::HasControlFlow);
    }
    for i in 0..f.try_except_blocks {
        let tid = format!("try:{q}#{i}");
        st.node(Node::new(&tid, NodeType::TryExcept, "try/except").with("file", path));
        st.edge(&id, &tid, EdgeType::HasTryExcept);
    }
    add_strings(st, path, q, &id, &f.string_constants);
    let mid = format!("complexity:{q}");
    st.node(
        Node::new(&mid, NodeType::ComplexityMetric, format!("complexity {}", f.complexity))
            .with("file", path)
            .with("value", f.complexity),
    );
    st.edge(&id, &mid, EdgeType::HasComplexity);

    let mut counts: BTreeMap<String, i64> = BTreeMap::new();
    for callee in &f.calls {
        let target = match resolver.resolve(q, callee) {
            Some(t) => function_id(&t),
            None => {
                stubs.insert(callee.clone());
                stub_id(callee)
            }
        };
        *counts.entry(target).or_insert(0) += 1;
    }
    for (target, count) in counts {
        let mut attrs = Attrs::new();
        attrs.insert("count".into(), count.into());
        st.edge_with(&id, &target, EdgeType::Calls, attrs);
    }
}

fn add_docstring(st: &mut Staging, path: &str, owner: &str, owner_id: &str, text: &str) {
    let id = format!("docstring:{owner}");
    st.node(
        Node::new(&id, NodeType::Docstring, truncate(text))
            .with("file", path)
            .with("text", text),
    );
    st.edge(owner_id, &id, EdgeType::HasDocstring);
}

fn add_decorators(st: &mut Staging, path: &str, owner: &str, owner_id: &str, decorators: &[String]) {
    for (i, d) in decorators.iter().enumerate() {
        let id = format!("decorator:{owner}#{i}");
        st.node(
            Node::new(&id, NodeType::Decorator, truncate(d))
                .with("file", path)
                .with("text", d.as_str()),
        );
        st.edge(owner_id, &id, EdgeType::DecoratedBy);
    }
}

fn add_strings(st: &mut Staging, path: &str, owner: &str, owner_id: &str, strings: &[String]) {
    for (i, s) in strings.iter().enumerate() {
        let id = format!("string:{owner}#{i}");
        st.node(
            Node::new(&id, NodeType::StringConstant, truncate(s))
                .with("file", path)
                .with("value", s.as_str()),
        );
        st.edge(owner_id, &id, EdgeType::HasString);
    }
}

/// Creates stub nodes that are called but missing, and drops stubs nobody
/// calls any more.
fn sync_stubs(st: &mut Staging) {
    let referenced: BTreeSet<String> = st
        .edges
        .keys()
        .filter(|k| k.edge_type == EdgeType::Calls && k.dst.starts_with(EXTERNAL_PREFIX))
        .map(|k| k.dst.clone())
        .collect();
    st.remove_nodes_where(|n| {
        n.node_type == NodeType::Function
            && n.id.starts_with(EXTERNAL_PREFIX)
            && !referenced.contains(&n.id)
    });
    for id in referenced {
        if !st.nodes.contains_key(&id) {
            let callee = &id[EXTERNAL_PREFIX.len()..];
            st.node(
                Node::new(&id, NodeType::Function, callee)
                    .with("external", true)
                    .with("qualified_name", callee),
            );
        }
    }
}

const HISTORY_NODES: [NodeType; 4] = [
    NodeType::Commit,
    NodeType::PullRequest,
    NodeType::Author,
    NodeType::User,
];
const HISTORY_EDGES: [EdgeType; 4] = [
    EdgeType::Modifies,
    EdgeType::Includes,
    EdgeType::AuthoredBy,
    EdgeType::OpenedBy,
];

/// Commit, pull request and identity layer of a snapshot.
fn history_layer(snap: &RepoSnapshot) -> Staging {
    let mut st = Staging::default();
    let present: BTreeSet<&str> = snap.files.iter().map(|f| f.path.as_str()).collect();
    let display: BTreeMap<&str, &str> = snap
        .users
        .iter()
        .map(|u| (u.identity.as_str(), u.display_name.as_str()))
        .collect();

    for u in &snap.users {
        st.node(
            Node::new(format!("user:{}", u.identity), NodeType::User, u.display_name.as_str())
                .with("login", u.identity.as_str()),
        );
    }
    for c in &snap.commits {
        let cid = format!("commit:{}", c.sha);
        let identity = commit_identity(&c.author_email);
        let deleted: Vec<&str> = c
            .changed_files
            .iter()
            .filter(|f| f.change_kind == ChangeKind::Deleted)
            .map(|f| f.path.as_str())
            .collect();
        let short = &c.sha[..c.sha.len().min(7)];
        let mut node = Node::new(&cid, NodeType::Commit, format!("{short} {}", truncate(&c.message)))
            .with("sha", c.sha.as_str())
            .with("message", c.message.as_str())
            .with("timestamp", c.timestamp)
            .with("author_name", c.author_name.as_str())
            .with("author_email", c.author_email.as_str())
            .with("changed_files", c.changed_files.len());
        if !deleted.is_empty() {
            node = node.with("deleted_paths", deleted.join("\n"));
        }
        st.node(node);

        let aid = format!("author:{identity}");
        let name = display.get(identity.as_str()).copied().unwrap_or(&c.author_name);
        st.node(
            Node::new(&aid, NodeType::Author, name)
                .with("identity", identity.as_str())
                .with("email", c.author_email.to_lowercase()),
        );
        st.edge(&cid, &aid, EdgeType::AuthoredBy);
        for f in &c.changed_files {
            if f.change_kind != ChangeKind::Deleted && present.contains(f.path.as_str()) {
                let mut attrs = Attrs::new();
                attrs.insert("change_kind".into(), f.change_kind.as_str().into());
                st.edge_with(&cid, &file_id(&f.path), EdgeType::Modifies, attrs);
            }
        }
    }
    let known: BTreeSet<&str> = snap.commits.iter().map(|c| c.sha.as_str()).collect();
    for pr in &snap.pull_requests {
        let pid = format!("pr:#{}", pr.number);
        let mut node = Node::new(&pid, NodeType::PullRequest, format!("#{} {}", pr.number, truncate(&pr.title)))
            .with("number", pr.number as i64)
            .with("title", pr.title.as_str())
            .with("body", pr.body.as_str())
            .with("author_login", pr.author_login.as_str())
            .with(
                "state",
                match pr.state {
                    PrState::Open => "open",
                    PrState::Closed => "closed",
                },
            )
            .with("merged", pr.merged);
        if let Some(t) = pr.created_at {
            node = node.with("created_at", t);
        }
        if let Some(t) = pr.merged_at {
            node = node.with("merged_at", t);
        }
        if !pr.unresolved_commit_shas.is_empty() {
            node = node.with("unresolved_commit_shas", pr.unresolved_commit_shas.join(","));
        }
        st.node(node);
        let uid = format!("user:{}", pr.author_login);
        if !st.nodes.contains_key(&uid) {
            st.node(
                Node::new(&uid, NodeType::User, pr.author_login.as_str())
                    .with("login", pr.author_login.as_str()),
            );
        }
        st.edge(&pid, &uid, EdgeType::OpenedBy);
        for sha in &pr.commit_shas {
            if known.contains(sha.as_str()) {
                st.edge(&pid, &format!("commit:{sha}"), EdgeType::Includes);
            }
        }
    }
    st
}

/// Replaces the history layer in `st` by `fresh`, touching only what differs.
fn merge_history(st: &mut Staging, fresh: Staging) {
    st.remove_nodes_where(|n| HISTORY_NODES.contains(&n.node_type) && !fresh.nodes.contains_key(&n.id));
    st.remove_edges_where(|k| HISTORY_EDGES.contains(&k.edge_type) && !fresh.edges.contains_key(k));
    for (id, node) in fresh.nodes {
        if st.nodes.get(&id) != Some(&node) {
            st.nodes.insert(id, node);
        }
    }
    for (k, attrs) in fresh.edges {
        if st.edges.get(&k) != Some(&attrs) {
            st.edges.insert(k, attrs);
        }
    }
}

/// Weakly connected components of the File/Class/Function projection over
/// CONTAINS and CALLS edges. Each component with at least one file gets a
/// Component node named after its smallest file path.
fn component_layer(st: &mut Staging, options: &BuildOptions) {
    st.remove_nodes_where(|n| n.node_type == NodeType::Component);
    if !options.components {
        return;
    }
    let members: Vec<&Node> = st
        .nodes
        .values()
        .filter(|n| matches!(n.node_type, NodeType::File | NodeType::Class | NodeType::Function))
        .collect();
    let index: HashMap<&str, usize> = members
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for k in st.edges.keys() {
        if !matches!(k.edge_type, EdgeType::Contains | EdgeType::Calls) {
            continue;
        }
        if let (Some(&a), Some(&b)) = (index.get(k.src.as_str()), index.get(k.dst.as_str())) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut files_by_root: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, n) in members.iter().enumerate() {
        if n.node_type == NodeType::File {
            let root = find(&mut parent, i);
            files_by_root.entry(root).or_default().push(n.id.clone());
        }
    }
    for files in files_by_root.into_values() {
        // members iterate in id order, so files[0] is the smallest path
        let first = files[0].strip_prefix("file:").unwrap_or(&files[0]).to_string();
        let cid = format!("component:{first}");
        st.node(
            Node::new(&cid, NodeType::Component, first.as_str())
                .with("files", files.len()),
        );
        for f in &files {
            st.edge(f, &cid, EdgeType::MemberOf);
        }
    }
}

fn check_schema(snapshot: &RepoSnapshot) -> Result<(), GraphError> {
    if snapshot.schema_version != SNAPSHOT_SCHEMA_VERSION {
        return Err(GraphError::SchemaMismatch {
            found: snapshot.schema_version,
            supported: SNAPSHOT_SCHEMA_VERSION,
        });
    }
    Ok(())
}

pub fn build_graph(snapshot: &RepoSnapshot) -> Result<KnowledgeGraph, GraphError> {
    build_graph_with(snapshot, &BuildOptions::default())
}

pub fn build_graph_with(
    snapshot: &RepoSnapshot,
    options: &BuildOptions,
) -> Result<KnowledgeGraph, GraphError> {
    check_schema(snapshot)?;
    let mut st = Staging::default();
    let mut stubs = BTreeSet::new();
    for f in &snapshot.files {
        add_file(&mut st, f, &mut stubs);
    }
    sync_stubs(&mut st);
    merge_history(&mut st, history_layer(snapshot));
    component_layer(&mut st, options);
    st.finish(
        Provenance {
            repo_id: snapshot.repo_id.clone(),
            head_sha: snapshot.head_sha.clone(),
        },
        0,
    )
}

pub fn apply_delta(
    graph: &KnowledgeGraph,
    snapshot: &RepoSnapshot,
) -> Result<(KnowledgeGraph, DeltaReport), GraphError> {
    apply_delta_with(graph, snapshot, &BuildOptions::default())
}

/// Incremental update: only files whose content hash changed are rebuilt;
/// the history layer is diffed; components are recomputed.
pub fn apply_delta_with(
    graph: &KnowledgeGraph,
    snapshot: &RepoSnapshot,
    options: &BuildOptions,
) -> Result<(KnowledgeGraph, DeltaReport), GraphError> {
    check_schema(snapshot)?;
    if graph.provenance.repo_id != snapshot.repo_id {
        return Err(GraphError::ProvenanceMismatch {
            expected: graph.provenance.repo_id.clone(),
            found: snapshot.repo_id.clone(),
        });
    }
    let old_hashes: BTreeMap<&str, &str> = graph
        .nodes()
        .iter()
        .filter(|n| n.node_type == NodeType::File)
        .filter_map(|n| Some((n.attr_str("path")?, n.attr_str("content_hash")?)))
        .collect();
    let new_files: BTreeMap<&str, &ParsedFile> =
        snapshot.files.iter().map(|f| (f.path.as_str(), f)).collect();

    let mut changed: BTreeSet<String> = BTreeSet::new();
    let mut new_hashes: BTreeMap<&str, String> = BTreeMap::new();
    for (path, f) in &new_files {
        let h = content_hash(f);
        if old_hashes.get(path) != Some(&h.as_str()) {
            changed.insert(path.to_string());
        }
        new_hashes.insert(path, h);
    }
    for path in old_hashes.keys() {
        if !new_files.contains_key(path) {
            changed.insert(path.to_string());
        }
    }

    let mut st = Staging::from_graph(graph.clone());
    st.remove_nodes_where(|n| {
        n.attr_str("file")
            .is_some_and(|p| changed.contains(p))
    });
    let mut stubs = BTreeSet::new();
    for path in &changed {
        if let Some(f) = new_files.get(path.as_str()) {
            add_file(&mut st, f, &mut stubs);
        }
    }
    sync_stubs(&mut st);
    merge_history(&mut st, history_layer(snapshot));
    component_layer(&mut st, options);
    let next = st.finish(
        Provenance {
            repo_id: snapshot.repo_id.clone(),
            head_sha: snapshot.head_sha.clone(),
        },
        graph.version + 1,
    )?;
    let report = DeltaReport::between(graph, &next, changed.into_iter().collect());
    Ok((next, report))
}
