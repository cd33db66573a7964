#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use git2::{IndexAddOption, Repository, Signature, Time};
use serde::Deserialize;
use tempfile::TempDir;

use repograph_core::ingest::{self, IngestConfig, PrSource, RepoSnapshot};

pub mod embed_cases;
pub mod golden;
pub mod mock_llm;
pub mod oracles;
pub mod scenario;
pub mod service_harness;
pub mod synth;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[derive(Debug, Deserialize)]
pub struct FixtureCommit {
    pub tree: String,
    pub author_name: String,
    pub author_email: String,
    pub timestamp: i64,
    pub message: String,
}

pub struct Fixture {
    pub dir: TempDir,
    pub repo: PathBuf,
    pub prs: PathBuf,
}

impl Fixture {
    pub fn config(&self) -> IngestConfig {
        IngestConfig {
            repo_id: Some("fixture".into()),
            ..IngestConfig::default()
        }
    }

    pub fn snapshot(&self) -> RepoSnapshot {
        ingest::snapshot(&self.repo, Some(&PrSource::Fixture(self.prs.clone())), &self.config())
            .expect("fixture snapshot")
    }
}

pub fn manifest() -> serde_json::Value {
    let text = std::fs::read_to_string(fixtures_dir().join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Replaces the worktree contents with `files` and commits everything.
pub fn commit_files(
    repo: &Repository,
    files: &BTreeMap<String, String>,
    name: &str,
    email: &str,
    timestamp: i64,
    message: &str,
) -> git2::Oid {
    let root = repo.workdir().unwrap().to_path_buf();
    for entry in std::fs::read_dir(&root).unwrap() {
        let p = entry.unwrap().path();
        if p.file_name().unwrap() == ".git" {
            continue;
        }
        if p.is_dir() {
            std::fs::remove_dir_all(&p).unwrap();
        } else {
            std::fs::remove_file(&p).unwrap();
        }
    }
    for (path, text) in files {
        let full = root.join(path);
        std::fs::create_dir_all(full.parent().unwrap()).unwrap();
        std::fs::write(full, text).unwrap();
    }
    let mut index = repo.index().unwrap();
    index.clear().unwrap();
    index
        .add_all(["*"].iter(), IndexAddOption::DEFAULT, None)
        .unwrap();
    index.write().unwrap();
    let tree_id = index.write_tree().unwrap();
    let tree = repo.find_tree(tree_id).unwrap();
    let sig = Signature::new(name, email, &Time::new(timestamp, 0)).unwrap();
    let parent = repo.head().ok().and_then(|h| h.peel_to_commit().ok());
    let parents: Vec<&git2::Commit> = parent.iter().collect();
    repo.commit(Some("HEAD"), &sig, &sig, message, &tree, &parents)
        .unwrap()
}

pub fn read_tree_dir(dir: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read_to_string(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn init_repo(path: &Path) -> Repository {
    let mut opts = git2::RepositoryInitOptions::new();
    opts.initial_head("main");
    Repository::init_opts(path, &opts).unwrap()
}

/// The three-commit fixture repository plus its PR records.
pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let repo_path = dir.path().join("fixture");
    std::fs::create_dir_all(&repo_path).unwrap();
    let repo = init_repo(&repo_path);
    let commits: Vec<FixtureCommit> = serde_json::from_str(
        &std::fs::read_to_string(fixtures_dir().join("commits.json")).unwrap(),
    )
    .unwrap();
    for c in &commits {
        let files = read_tree_dir(&fixtures_dir().join(&c.tree));
        commit_files(&repo, &files, &c.author_name, &c.author_email, c.timestamp, &c.message);
    }
    Fixture {
        repo: repo_path,
        prs: fixtures_dir().join("prs"),
        dir,
    }
}
