use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::ingest::IngestConfig;
use crate::router::RouterConfig;

/// `[ingest]`: where `POST /ingest` and `repograph ingest` read from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestSection {
    pub repo: Option<PathBuf>,
    #[serde(flatten)]
    pub options: IngestConfig,
}

/// `[engines]`: artifact paths. Only `graph` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnginesSection {
    pub graph: PathBuf,
    /// Precomputed feature matrix; recomputed from the graph when unset.
    pub features: Option<PathBuf>,
    /// External text encoder base URL; the hashed encoder is used when unset.
    pub encoder_url: Option<String>,
    pub deepgraph: Option<PathBuf>,
    pub kblam: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

impl Default for EnginesSection {
    fn default() -> Self {
        Self {
            graph: PathBuf::from("graph.json"),
            features: None,
            encoder_url: None,
            deepgraph: None,
            kblam: None,
            index: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: String,
    pub memory: PathBuf,
    pub ui_dir: Option<PathBuf>,
    pub subgraph_limit: usize,
    pub default_k: usize,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            memory: PathBuf::from("memory.jsonl"),
            ui_dir: None,
            subgraph_limit: 200,
            default_k: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub ingest: IngestSection,
    pub router: RouterConfig,
    pub engines: EnginesSection,
    pub server: ServerSection,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.router.validate().map_err(ServiceError::Config)?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let e = &mut cfg.engines;
        rebase(base, &mut e.graph);
        for p in [&mut e.features, &mut e.deepgraph, &mut e.kblam, &mut e.index].into_iter().flatten() {
            rebase(base, p);
        }
        rebase(base, &mut cfg.server.memory);
        if let Some(p) = cfg.server.ui_dir.as_mut() {
            rebase(base, p);
        }
        if let Some(p) = cfg.ingest.repo.as_mut() {
            rebase(base, p);
        }
        Ok(cfg)
    }
}
