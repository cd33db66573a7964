use std::collections::BTreeMap;
use std::path::Path;

use git2::{Delta, DiffFindOptions, ErrorCode, Oid, Repository, Sort, Tree};

use super::types::{ChangeKind, ChangedFile, Commit, NULL_SHA};
use super::IngestError;

/// UTF-8 files at HEAD (or in the worktree of a repository without commits).
#[derive(Debug, Clone, Default)]
pub struct HeadFiles {
    pub head_sha: String,
    pub files: BTreeMap<String, String>,
}

fn open(repo_path: &Path) -> Result<Repository, IngestError> {
    Repository::open(repo_path).map_err(|_| IngestError::NotARepository(repo_path.to_path_buf()))
}

fn corrupt(oid: Oid, e: git2::Error) -> IngestError {
    IngestError::CorruptObject {
        sha: oid.to_string(),
        reason: e.message().to_string(),
    }
}

fn head_oid(repo: &Repository) -> Result<Option<Oid>, IngestError> {
    match repo.head() {
        Ok(r) => Ok(r.target()),
        Err(e) if matches!(e.code(), ErrorCode::UnbornBranch | ErrorCode::NotFound) => Ok(None),
        Err(e) => Err(IngestError::CorruptObject {
            sha: "HEAD".into(),
            reason: e.message().to_string(),
        }),
    }
}

/// One record per commit reachable from HEAD, sorted by (timestamp, sha).
/// Changed files are diffed against the first parent, with rename detection.
pub fn extract_git_history(repo_path: &Path) -> Result<Vec<Commit>, IngestError> {
    let repo = open(repo_path)?;
    let Some(head) = head_oid(&repo)? else {
        return Ok(Vec::new());
    };
    let mut walk = repo.revwalk().map_err(|e| corrupt(head, e))?;
    walk.set_sorting(Sort::TOPOLOGICAL)
        .map_err(|e| corrupt(head, e))?;
    walk.push(head).map_err(|e| corrupt(head, e))?;

    let mut out = Vec::new();
    for oid in walk {
        let oid = oid.map_err(|e| corrupt(head, e))?;
        let commit = repo.find_commit(oid).map_err(|e| corrupt(oid, e))?;
        let tree = commit.tree().map_err(|e| corrupt(oid, e))?;
        let parent_tree = match commit.parent_count() {
            0 => None,
            _ => Some(
                commit
                    .parent(0)
                    .and_then(|p| p.tree())
                    .map_err(|e| corrupt(oid, e))?,
            ),
        };
        let changed_files = diff_trees(&repo, parent_tree.as_ref(), &tree)
            .map_err(|e| corrupt(oid, e))?;
        let author = commit.author();
        out.push(Commit {
            sha: oid.to_string(),
            author_name: author.name().unwrap_or_default().to_string(),
            author_email: author.email().unwrap_or_default().to_string(),
            timestamp: author.when().seconds(),
            message: commit.message().unwrap_or_default().trim_end().to_string(),
            changed_files,
        });
    }
    out.sort_by(|a, b| (a.timestamp, &a.sha).cmp(&(b.timestamp, &b.sha)));
    Ok(out)
}

fn diff_trees(
    repo: &Repository,
    old: Option<&Tree>,
    new: &Tree,
) -> Result<Vec<ChangedFile>, git2::Error> {
    let mut diff = repo.diff_tree_to_tree(old, Some(new), None)?;
    let mut find = DiffFindOptions::new();
    find.renames(true);
    diff.find_similar(Some(&mut find))?;
    let mut out = Vec::new();
    for delta in diff.deltas() {
        let (file, kind) = match delta.status() {
            Delta::Added | Delta::Copied => (delta.new_file(), ChangeKind::Added),
            Delta::Deleted => (delta.old_file(), ChangeKind::Deleted),
            Delta::Renamed => (delta.new_file(), ChangeKind::Renamed),
            Delta::Modified | Delta::Typechange => (delta.new_file(), ChangeKind::Modified),
            _ => continue,
        };
        if let Some(path) = file.path() {
            out.push(ChangedFile {
                path: path.to_string_lossy().replace('\\', "/"),
                change_kind: kind,
            });
        }
    }
    out.sort();
    Ok(out)
}

/// Reads file contents from the HEAD tree. Repositories without commits fall
/// back to the working directory. Non-UTF-8 blobs are skipped.
pub fn read_head_files(repo_path: &Path) -> Result<HeadFiles, IngestError> {
    let repo = open(repo_path)?;
    let Some(head) = head_oid(&repo)? else {
        let mut files = BTreeMap::new();
        if let Some(workdir) = repo.workdir() {
            read_worktree(workdir, workdir, &mut files)?;
        }
        return Ok(HeadFiles {
            head_sha: NULL_SHA.to_string(),
            files,
        });
    };
    let tree = repo
        .find_commit(head)
        .and_then(|c| c.tree())
        .map_err(|e| corrupt(head, e))?;
    let mut files = BTreeMap::new();
    let mut failure = None;
    tree.walk(git2::TreeWalkMode::PreOrder, |dir, entry| {
        if entry.kind() != Some(git2::ObjectType::Blob) {
            return git2::TreeWalkResult::Ok;
        }
        let path = format!("{dir}{}", entry.name().unwrap_or_default());
        match repo.find_blob(entry.id()) {
            Ok(blob) => {
                if let Ok(text) = std::str::from_utf8(blob.content()) {
                    files.insert(path, text.to_string());
                }
                git2::TreeWalkResult::Ok
            }
            Err(e) => {
                failure = Some(corrupt(entry.id(), e));
                git2::TreeWalkResult::Abort
            }
        }
    })
    .map_err(|e| failure.take().unwrap_or_else(|| corrupt(head, e)))?;
    if let Some(f) = failure {
        return Err(f);
    }
    Ok(HeadFiles {
        head_sha: head.to_string(),
        files,
    })
}

fn read_worktree(
    root: &Path,
    dir: &Path,
    out: &mut BTreeMap<String, String>,
) -> Result<(), IngestError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if entry.file_name() == ".git" {
            continue;
        }
        let ft = entry.file_type()?;
        if ft.is_dir() {
            read_worktree(root, &path, out)?;
        } else if ft.is_file() {
            if let Ok(text) = std::fs::read_to_string(&path) {
                let rel = path
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .to_string_lossy()
                    .replace('\\', "/");
                out.insert(rel, text);
            }
        }
    }
    Ok(())
}
