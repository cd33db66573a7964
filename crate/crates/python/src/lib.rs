//! Python bindings. Structured results cross the boundary as plain
//! dicts and lists built from the core crate's JSON serialisation.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use repograph_core::embed::{self, EmbeddingIndex, WalkConfig};
use repograph_core::ingest::{self, IngestConfig, PrSource};
use repograph_core::kgraph::{self, KnowledgeGraph};
use repograph_core::router::{self, Backend, Engines, RouterConfig};
use repograph_core::service::{self, EnginesSection};

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn router_err(e: router::RouterError) -> PyErr {
    match e {
        router::RouterError::EmptyQuery => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_backend(name: Option<&str>) -> PyResult<Option<Backend>> {
    name.map(|n| Backend::parse(n).ok_or_else(|| PyValueError::new_err(format!("unknown backend {n:?}"))))
        .transpose()
}

/// An immutable repository knowledge graph.
#[pyclass(frozen, module = "repograph")]
pub struct Graph {
    inner: Arc<KnowledgeGraph>,
}

#[pymethods]
impl Graph {
    /// Snapshot a git repository (and optionally a directory of PR JSON files) and build its graph.
    #[staticmethod]
    #[pyo3(signature = (repo, prs=None, repo_id=None))]
    fn from_repo(py: Python<'_>, repo: PathBuf, prs: Option<PathBuf>, repo_id: Option<String>) -> PyResult<Self> {
        let g = py.detach(|| {
            let config = IngestConfig { repo_id, ..Default::default() };
            let source = prs.map(PrSource::Fixture);
            let snap = ingest::snapshot(&repo, source.as_ref(), &config).map_err(|e| e.to_string())?;
            kgraph::build_graph(&snap).map_err(|e| e.to_string())
        });
        Ok(Graph { inner: Arc::new(g.map_err(PyRuntimeError::new_err)?) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Graph { inner: Arc::new(kgraph::import_json(&path).map_err(err)?) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Graph { inner: Arc::new(kgraph::graph_from_json(text).map_err(|e| PyValueError::new_err(e.to_string()))?) })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        kgraph::export_json(&self.inner, &path).map_err(err)
    }

    fn to_json(&self) -> String {
        kgraph::graph_to_json(&self.inner)
    }

    fn export_graphml(&self, path: PathBuf) -> PyResult<()> {
        kgraph::export_graphml(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn version(&self) -> u64 {
        self.inner.version
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }

    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.stats())
    }

    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes().iter().map(|n| n.id.clone()).collect()
    }

    /// The node as a dict; raises KeyError for unknown ids.
    fn node(&self, py: Python<'_>, id: &str) -> PyResult<Py<PyAny>> {
        match self.inner.node(id) {
            Some(n) => to_py(py, n),
            None => Err(PyKeyError::new_err(id.to_string())),
        }
    }

    /// Ids of nodes adjacent to `id`, ignoring direction.
    fn neighbors(&self, id: &str) -> PyResult<Vec<String>> {
        let i = self.inner.index_of(id).ok_or_else(|| PyKeyError::new_err(id.to_string()))?;
        Ok(self.inner.undirected_neighbors(i).into_iter().map(|j| self.inner.node_at(j).id.clone()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, edges={}, version={})", self.inner.node_count(), self.inner.edge_count(), self.inner.version)
    }
}

/// Routing plus the answering backends over one graph.
#[pyclass(frozen, module = "repograph")]
pub struct Engine {
    engines: Engines,
    router: RouterConfig,
}

#[pymethods]
impl Engine {
    /// Backends for `graph`. Trained artifacts are optional paths; missing
    /// ones make the matching backend unavailable. With `embed=True` an
    /// embedding index is trained in memory when no `index` is given.
    #[new]
    #[pyo3(signature = (graph, deepgraph=None, kblam=None, index=None, embed=false, endpoint=None, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        py: Python<'_>,
        graph: &Graph,
        deepgraph: Option<PathBuf>,
        kblam: Option<PathBuf>,
        index: Option<PathBuf>,
        embed: bool,
        endpoint: Option<String>,
        seed: u64,
    ) -> PyResult<Self> {
        let g = (*graph.inner).clone();
        let engines = py.detach(|| -> Result<Engines, String> {
            let encoder = service::make_encoder(None).map_err(|e| e.to_string())?;
            let section = EnginesSection { deepgraph, kblam, index: index.clone(), ..Default::default() };
            let mut engines = service::engines_for_graph(g, &section, encoder).map_err(|e| e.to_string())?;
            if embed && index.is_none() {
                let cfg = WalkConfig { seed, ..Default::default() };
                let built = embed::build_embeddings(&engines.graph, &engines.features, &cfg).map_err(|e| e.to_string())?;
                engines.index = Some(Arc::new(built));
            }
            Ok(engines)
        });
        let router = RouterConfig { endpoint, ..Default::default() };
        router.validate().map_err(PyValueError::new_err)?;
        Ok(Engine { engines: engines.map_err(PyRuntimeError::new_err)?, router })
    }

    /// Route `text`, answer it and return the full result as a dict.
    #[pyo3(signature = (text, backend=None, k=10))]
    fn query(&self, py: Python<'_>, text: &str, backend: Option<&str>, k: usize) -> PyResult<Py<PyAny>> {
        let backend = parse_backend(backend)?;
        let answer = py.detach(|| {
            let decision = router::route_with_override(text, backend, &self.router);
            router::dispatch(&decision, text, &self.engines, k)
        });
        to_py(py, &answer.map_err(router_err)?)
    }

    /// The routing decision alone.
    #[pyo3(signature = (text, backend=None))]
    fn route(&self, py: Python<'_>, text: &str, backend: Option<&str>) -> PyResult<Py<PyAny>> {
        let backend = parse_backend(backend)?;
        let decision = py.detach(|| router::route_with_override(text, backend, &self.router));
        to_py(py, &decision)
    }

    /// Cosine top-k over node text; needs an embedding index.
    #[pyo3(signature = (text, k=10))]
    fn search(&self, text: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        let index: &EmbeddingIndex =
            self.engines.index.as_deref().ok_or_else(|| PyRuntimeError::new_err("no embedding index loaded"))?;
        embed::query_topk(index, self.engines.encoder.as_ref(), text, k).map_err(err)
    }
}

/// Rule-based query classification, as a routing decision dict.
#[pyfunction]
fn classify(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &router::classify_fallback(text).map_err(router_err)?)
}

/// The router prompt filled in with `text`.
#[pyfunction]
fn render_prompt(text: &str) -> PyResult<String> {
    router::render_prompt(text).map_err(router_err)
}

/// Adds the module contents to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Graph>()?;
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    Ok(())
}

#[pymodule]
fn repograph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
