use std::collections::BTreeMap;

use repograph_core::ingest::{self, PrSource, RepoSnapshot};

pub struct Scenario {
    pub fx: super::Fixture,
    pub repo: git2::Repository,
    pub files: BTreeMap<String, String>,
    pub prs: tempfile::TempDir,
    pub clock: i64,
}

impl Scenario {
    pub fn new() -> Self {
        let fx = super::fixture();
        let repo = git2::Repository::open(&fx.repo).unwrap();
        let files = super::read_tree_dir(&super::fixtures_dir().join("repo/c3"));
        let prs = tempfile::tempdir().unwrap();
        for entry in std::fs::read_dir(&fx.prs).unwrap() {
            let p = entry.unwrap().path();
            std::fs::copy(&p, prs.path().join(p.file_name().unwrap())).unwrap();
        }
        Self {
            fx,
            repo,
            files,
            prs,
            clock: 1_700_010_000,
        }
    }

    pub fn commit(&mut self, message: &str) -> String {
        self.clock += 60;
        super::commit_files(
            &self.repo,
            &self.files,
            "Bob Builder",
            "bob@users.noreply.github.com",
            self.clock,
            message,
        )
        .to_string()
    }

    pub fn snapshot(&self) -> RepoSnapshot {
        ingest::snapshot(
            &self.fx.repo,
            Some(&PrSource::Fixture(self.prs.path().into())),
            &self.fx.config(),
        )
        .unwrap()
    }

    /// Applies scripted mutation `step` (1..=5) and commits it; returns the new sha.
    pub fn mutate(&mut self, step: usize) -> String {
        match step {
            1 => {
                let utils = self.files["app/utils.py"].replace(
                    "def chunk(items, size=10):\n    return",
                    "def chunk(items, size=10):\n    if size <= 0:\n        raise ValueError(size)\n    return",
                );
                self.files.insert("app/utils.py".into(), utils);
                self.commit("Validate chunk size\n")
            }
            2 => {
                self.files.remove("app/__init__.py");
                self.commit("Drop package init\n")
            }
            3 => {
                self.files.insert(
                    "app/cli.py".into(),
                    "import sys\n\n\ndef main(argv=None):\n    \"\"\"Entry point.\"\"\"\n    args = argv or sys.argv[1:]\n    for a in args:\n        print(a)\n    return 0\n".into(),
                );
                self.commit("Add command line entry point\n")
            }
            4 => {
                let render = self.files.remove("app/render.py").unwrap();
                self.files.insert("app/markdown.py".into(), render);
                self.commit("Rename render module\n")
            }
            5 => {
                let config = self.files["app/config.py"].replace("settings.toml", "app.toml");
                self.files.insert("app/config.py".into(), config);
                let sha = self.commit("Rename default settings file\n");
                let pr2 = std::fs::read_to_string(self.prs.path().join("pr_2.json")).unwrap();
                let pr2 = pr2
                    .replace("\"open\"", "\"closed\"")
                    .replace("\"merged\": false", "\"merged\": true")
                    .replace("\"merged_at\": null", "\"merged_at\": 1700020000");
                std::fs::write(self.prs.path().join("pr_2.json"), pr2).unwrap();
                std::fs::write(
                    self.prs.path().join("pr_3.json"),
                    format!(
                        "{{\"number\": 3, \"title\": \"Settings rename\", \"author_login\": \"bob\", \"state\": \"open\", \"commit_shas\": [\"{sha}\"]}}"
                    ),
                )
                .unwrap();
                sha
            }
            _ => panic!("no mutation {step}"),
        }
    }
}
