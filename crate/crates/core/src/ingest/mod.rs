//! Repository ingestion: Python sources, Git history and pull requests into
//! a [`RepoSnapshot`].

mod git;
mod pulls;
mod python;
mod types;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use git::{extract_git_history, read_head_files, HeadFiles};
pub use pulls::{fetch_pull_requests, PrSource, RemoteSource, RetryPolicy};
pub use python::parse_python;
pub use types::*;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("not a git repository: {0}")]
    NotARepository(PathBuf),
    #[error("corrupt object {sha}: {reason}")]
    CorruptObject { sha: String, reason: String },
    #[error("rate limited until {reset}")]
    RateLimited { reset: i64 },
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("malformed record {source_name}: {reason}")]
    MalformedRecord { source_name: String, reason: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unsupported file extension for {0}")]
    UnsupportedExtension(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// File extensions in scope, with the leading dot.
    pub extensions: Vec<String>,
    /// A fixture directory of `pr_<n>.json` files, or an `https://` API base
    /// of the form `https://api.github.com/repos/<owner>/<name>`.
    pub pr_source: Option<String>,
    /// Environment variable holding the API token for remote PR sources.
    pub api_token_env: String,
    /// Logical repository name; defaults to the directory name.
    pub repo_id: Option<String>,
    /// When set, `snapshot` writes canonical JSON here.
    pub output: Option<PathBuf>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            extensions: vec![".py".to_string()],
            pr_source: None,
            api_token_env: "GITHUB_TOKEN".to_string(),
            repo_id: None,
            output: None,
        }
    }
}

impl IngestConfig {
    pub fn in_scope(&self, path: &str) -> bool {
        self.extensions.iter().any(|ext| path.ends_with(ext.as_str()))
    }
}

/// Parses one source file. Only Python is supported; any other extension is
/// rejected.
pub fn parse_file(path: &str, source: &str) -> Result<ParsedFile, IngestError> {
    if !path.ends_with(".py") {
        return Err(IngestError::UnsupportedExtension(path.to_string()));
    }
    Ok(parse_python(path, source))
}

/// Parses many files concurrently. Output order follows path order
/// regardless of scheduling.
pub fn parse_files(sources: &BTreeMap<String, String>) -> Vec<ParsedFile> {
    let entries: Vec<(&String, &String)> = sources.iter().collect();
    entries
        .par_iter()
        .map_init(python::new_parser, |parser, (path, text)| {
            python::parse_with(parser, path, text)
        })
        .collect()
}

/// Builds the full snapshot of a repository.
pub fn snapshot(
    repo_path: &Path,
    pr_source: Option<&PrSource>,
    config: &IngestConfig,
) -> Result<RepoSnapshot, IngestError> {
    let head = read_head_files(repo_path)?;
    let commits = extract_git_history(repo_path)?;

    let sources: BTreeMap<String, String> = head
        .files
        .into_iter()
        .filter(|(p, _)| config.in_scope(p))
        .collect();
    let files = parse_files(&sources);

    let mut warnings = Vec::new();
    let mut pull_requests = match pr_source {
        None => Vec::new(),
        Some(src) => match fetch_pull_requests(src) {
            Ok(prs) => prs,
            Err(e) => {
                tracing::warn!(error = %e, "pull requests unavailable");
                warnings.push(format!("pull requests unavailable: {e}"));
                Vec::new()
            }
        },
    };

    let known: BTreeSet<&str> = commits.iter().map(|c| c.sha.as_str()).collect();
    for pr in &mut pull_requests {
        let (resolved, unresolved): (Vec<String>, Vec<String>) = pr
            .commit_shas
            .iter()
            .cloned()
            .partition(|s| known.contains(s.as_str()));
        pr.commit_shas = resolved;
        pr.unresolved_commit_shas = unresolved;
    }

    let mut users: BTreeMap<String, String> = BTreeMap::new();
    for c in &commits {
        users
            .entry(commit_identity(&c.author_email))
            .or_insert_with(|| c.author_name.clone());
    }
    for pr in &pull_requests {
        users
            .entry(pr.author_login.clone())
            .or_insert_with(|| pr.author_login.clone());
    }

    let repo_id = config.repo_id.clone().unwrap_or_else(|| {
        repo_path
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "repo".to_string())
    });

    let mut snap = RepoSnapshot {
        schema_version: SNAPSHOT_SCHEMA_VERSION,
        repo_id,
        head_sha: head.head_sha,
        files,
        commits,
        pull_requests,
        users: users
            .into_iter()
            .map(|(identity, display_name)| UserIdentity {
                identity,
                display_name,
            })
            .collect(),
        warnings,
    };
    snap.canonicalize();
    if let Some(out) = &config.output {
        std::fs::write(out, snap.to_canonical_json())?;
    }
    Ok(snap)
}

/// Resolves a configured `pr_source` string.
pub fn pr_source_from_config(config: &IngestConfig) -> Option<PrSource> {
    let raw = config.pr_source.as_deref()?;
    if raw.starts_with("http://") || raw.starts_with("https://") {
        let token = std::env::var(&config.api_token_env).ok();
        Some(PrSource::Remote(RemoteSource::new(raw, token)))
    } else {
        Some(PrSource::Fixture(PathBuf::from(raw)))
    }
}
