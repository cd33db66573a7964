use serde::{Deserialize, Serialize};

/// Version of the snapshot JSON layout.
pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// SHA used as `head_sha` for repositories without commits.
pub const NULL_SHA: &str = "0000000000000000000000000000000000000000";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Param {
    pub name: String,
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub name: String,
    /// `path::scope::name`.
    pub qualified_name: String,
    pub is_async: bool,
    pub params: Vec<Param>,
    pub return_annotation: Option<String>,
    pub docstring: Option<String>,
    pub decorators: Vec<String>,
    /// Callee expressions in source order (duplicates kept).
    pub calls: Vec<String>,
    pub assignments: u32,
    pub control_flow: Vec<String>,
    pub try_except_blocks: u32,
    pub lambdas: u32,
    pub comprehensions: u32,
    pub string_constants: Vec<String>,
    /// Cyclomatic complexity, `1 + branch points`.
    pub complexity: u32,
    /// Character count of the definition, decorators excluded.
    pub code_length: u32,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub qualified_name: String,
    pub bases: Vec<String>,
    pub docstring: Option<String>,
    pub decorators: Vec<String>,
    pub methods: Vec<FunctionInfo>,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedFile {
    /// Repo-relative, forward slashes.
    pub path: String,
    pub module_docstring: Option<String>,
    pub functions: Vec<FunctionInfo>,
    pub classes: Vec<ClassInfo>,
    pub imports: Vec<String>,
    pub string_constants: Vec<String>,
    pub line_count: u32,
    #[serde(default)]
    pub parse_failed: bool,
}

impl ParsedFile {
    pub fn empty(path: impl Into<String>, line_count: u32, parse_failed: bool) -> Self {
        Self {
            path: path.into(),
            module_docstring: None,
            functions: Vec::new(),
            classes: Vec::new(),
            imports: Vec::new(),
            string_constants: Vec::new(),
            line_count,
            parse_failed,
        }
    }

    /// Every function in the file, methods included.
    pub fn all_functions(&self) -> impl Iterator<Item = &FunctionInfo> {
        self.functions
            .iter()
            .chain(self.classes.iter().flat_map(|c| c.methods.iter()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Added,
    Modified,
    Deleted,
    Renamed,
}

impl ChangeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChangeKind::Added => "added",
            ChangeKind::Modified => "modified",
            ChangeKind::Deleted => "deleted",
            ChangeKind::Renamed => "renamed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChangedFile {
    pub path: String,
    pub change_kind: ChangeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub sha: String,
    pub author_name: String,
    pub author_email: String,
    /// UTC seconds.
    pub timestamp: i64,
    pub message: String,
    pub changed_files: Vec<ChangedFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequest {
    pub number: u64,
    pub title: String,
    #[serde(default)]
    pub body: String,
    pub author_login: String,
    pub state: PrState,
    #[serde(default)]
    pub merged: bool,
    #[serde(default)]
    pub created_at: Option<i64>,
    #[serde(default)]
    pub merged_at: Option<i64>,
    #[serde(default)]
    pub commit_shas: Vec<String>,
    /// Filled during snapshot assembly: shas that match no known commit
    /// (typically squash merges).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unresolved_commit_shas: Vec<String>,
}

impl PullRequest {
    /// `merged ⇒ closed ∧ merged_at`.
    pub fn is_consistent(&self) -> bool {
        !self.merged || (self.state == PrState::Closed && self.merged_at.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserIdentity {
    /// Login for PR authors; for commit authors the login recovered from a
    /// GitHub noreply address, otherwise the lowercased email.
    pub identity: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSnapshot {
    pub schema_version: u32,
    pub repo_id: String,
    pub head_sha: String,
    pub files: Vec<ParsedFile>,
    pub commits: Vec<Commit>,
    pub pull_requests: Vec<PullRequest>,
    pub users: Vec<UserIdentity>,
    /// Non-fatal degradations (e.g. PR source unavailable). Absent when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RepoSnapshot {
    pub fn empty(repo_id: impl Into<String>) -> Self {
        Self {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            repo_id: repo_id.into(),
            head_sha: NULL_SHA.to_string(),
            files: Vec::new(),
            commits: Vec::new(),
            pull_requests: Vec::new(),
            users: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Sorts every collection into canonical order.
    pub fn canonicalize(&mut self) {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.commits
            .sort_by(|a, b| (a.timestamp, &a.sha).cmp(&(b.timestamp, &b.sha)));
        for c in &mut self.commits {
            c.changed_files.sort();
        }
        self.pull_requests.sort_by_key(|p| p.number);
        self.users.sort();
        self.users.dedup_by(|a, b| a.identity == b.identity);
    }

    /// Canonical JSON: sorted keys, canonical collection order, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = self.clone();
        s.canonicalize();
        // serde_json::Value keeps object keys in a BTreeMap, so going through
        // it sorts every key.
        let value = serde_json::to_value(&s).expect("snapshot serialises");
        let mut out = serde_json::to_string_pretty(&value).expect("value serialises");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Login-or-email identity used for commit authors.
    pub fn commit_identity(email: &str) -> String {
        commit_identity(email)
    }
}

pub(crate) fn commit_identity(email: &str) -> String {
    let email = email.trim().to_lowercase();
    if let Some(local) = email.strip_suffix("@users.noreply.github.com") {
        // `12345+login@users.noreply.github.com` or `login@users.noreply.github.com`
        return local.rsplit('+').next().unwrap_or(local).to_string();
    }
    email
}
