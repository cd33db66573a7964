use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use repograph_core::deepgraph::{
    self, train_gae, train_han, train_sage_supervised, GaeConfig, HanConfig, HanLoss,
    SageConfig, SplitRatios,
};
use repograph_core::embed::{self, EmbeddingIndex, WalkConfig};
use repograph_core::featurize::{self, NodeFeatureMatrix, TextEncoder};
use repograph_core::ingest::{self, IngestConfig, RepoSnapshot};
use repograph_core::kblam::{self, KblamConfig, TemplateConfig};
use repograph_core::kgraph::{self, KnowledgeGraph};
use repograph_core::router::{self, Backend, Engines, RouterConfig};
use repograph_core::service::{self, make_encoder, MemoryFilter, MemoryStore, ServiceConfig};

#[derive(Parser)]
#[command(name = "repograph", version, about = "Repository knowledge graphs and routed question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Snapshot a git repository (files, history, pull requests) to JSON.
    Ingest {
        #[arg(long)]
        repo: PathBuf,
        /// Directory of pr_<n>.json files or an https API base.
        #[arg(long)]
        prs: Option<String>,
        #[arg(long)]
        repo_id: Option<String>,
        #[arg(long, default_value = "snapshot.json")]
        out: PathBuf,
    },
    /// Build a graph from a snapshot.
    Build {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value = "graph.json")]
        out: PathBuf,
        #[arg(long)]
        graphml: Option<PathBuf>,
    },
    /// Apply a newer snapshot to an existing graph in place.
    Update {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Node and edge counts by type.
    Stats {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Write a graph as JSON or GraphML.
    Export {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "graphml")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Train(TrainCommand),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Route and answer one question.
    Query {
        text: String,
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        backend: Option<String>,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "repograph.toml")]
        config: PathBuf,
        /// Overrides [server].bind.
        #[arg(long)]
        bind: Option<String>,
    },
    #[command(subcommand)]
    Memory(MemoryCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Json,
    Graphml,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sage,
    Gae,
    Han,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Contrastive,
    Infonce,
}

#[derive(Args)]
struct ConfigSource {
    /// Service configuration naming the graph and trained artifacts.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A graph file, used when no configuration is given.
    #[arg(long)]
    graph: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TrainCommand {
    /// Link prediction (sage, gae) or heterogeneous embeddings (han).
    Deepgraph {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, value_enum, default_value = "contrastive")]
        loss: Loss,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
    },
    /// Rectangular-attention question answering over subgraph windows.
    Kblam {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value = "kblam.ckpt")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Template-generated QA pairs with answers computed from the graph.
    Generate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 200)]
        train: usize,
        #[arg(long, default_value_t = 50)]
        val: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "qa.yaml")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EmbedCommand {
    /// Train walk embeddings and write index.json + index.vec.
    Build {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "index")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Nearest nodes to a text by cosine.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// Print stored records as JSON lines.
    List {
        #[arg(long, default_value = "memory.jsonl")]
        memory: PathBuf,
        #[arg(long)]
        backend: Option<String>,
        /// RFC 3339 timestamp.
        #[arg(long)]
        since: Option<String>,
    },
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    kgraph::import_json(path).with_context(|| format!("reading graph {}", path.display()))
}

fn load_snapshot(path: &Path) -> Result<RepoSnapshot> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(RepoSnapshot::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn features(graph: &KnowledgeGraph, encoder: &dyn TextEncoder) -> Result<NodeFeatureMatrix> {
    Ok(featurize::featurize_nodes(graph, encoder)?)
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn parse_backend(name: Option<&str>) -> Result<Option<Backend>> {
    match name {
        None => Ok(None),
        Some(n) => match Backend::parse(n) {
            Some(b) => Ok(Some(b)),
            None => bail!("unknown backend {n}; expected kblam, deepgraph or embedding"),
        },
    }
}

fn train_deepgraph(mode: Mode, loss: Loss, graph: &Path, seed: u64, epochs: Option<usize>, out: &Path) -> Result<()> {
    let g = load_graph(graph)?;
    let enc = make_encoder(None)?;
    let x = features(&g, enc.as_ref())?.matrix;
    let ckpt = match mode {
        Mode::Sage => {
            let mut cfg = SageConfig { seed, ..Default::default() };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let split = deepgraph::split_edges(&g, SplitRatios::default(), 1.0, seed)?;
            let run = train_sage_supervised(&g, &x, &split, cfg)?;
            for e in &run.history {
                print_json(e)?;
            }
            print_json(&json!({"best_epoch": run.best_epoch, "test": run.test}))?;
            run.model.to_checkpoint()
        }
        Mode::Gae => {
            let mut cfg = GaeConfig { seed, ..Default::default() };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let run = train_gae(&g, &x, cfg)?;
            for e in &run.history {
                print_json(e)?;
            }
            print_json(&json!({"best_epoch": run.best_epoch, "test": run.test}))?;
            run.model.to_checkpoint()
        }
        Mode::Han => {
            let loss = match loss {
                Loss::Contrastive => HanLoss::Contrastive,
                Loss::Infonce => HanLoss::Infonce,
            };
            let mut cfg = HanConfig { seed, loss, ..Default::default() };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let run = train_han(&g, &x, cfg)?;
            for e in &run.history {
                print_json(e)?;
            }
            print_json(&json!({
                "silhouette": run.silhouette,
                "mean_pos_cosine": run.mean_pos_cosine,
                "mean_random_cosine": run.mean_random_cosine,
                "semantic_weights": run.semantic,
            }))?;
            run.model.to_checkpoint()
        }
    };
    ckpt.save(out)?;
    eprintln!("checkpoint written to {}", out.display());
    Ok(())
}

fn train_kblam(graph: &Path, dataset: &Path, seed: u64, epochs: Option<usize>, out: &Path) -> Result<()> {
    let g = load_graph(graph)?;
    let enc = make_encoder(None)?;
    let feats = features(&g, enc.as_ref())?;
    let ds = kblam::load_dataset(dataset, &g)?;
    let mut cfg = KblamConfig { seed, ..Default::default() };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let run = kblam::train_kblam(&g, &feats, &ds, enc.as_ref(), cfg, |e| {
        if let Ok(line) = serde_json::to_string(e) {
            println!("{line}");
        }
    })?;
    print_json(&json!({"best_epoch": run.best_epoch, "best": run.best}))?;
    run.model.to_checkpoint().save(out)?;
    eprintln!("checkpoint written to {}", out.display());
    Ok(())
}

/// Engines from a service configuration, or from a bare graph.
fn engines_from(source: &ConfigSource) -> Result<(Engines, RouterConfig)> {
    match (&source.config, &source.graph) {
        (Some(c), _) => {
            let cfg = ServiceConfig::load(c)?;
            Ok((service::load_engines(&cfg.engines)?, cfg.router))
        }
        (None, Some(g)) => {
            let section = service::EnginesSection { graph: g.clone(), ..Default::default() };
            Ok((service::load_engines(&section)?, RouterConfig::default()))
        }
        (None, None) => bail!("pass --config or --graph"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { repo, prs, repo_id, out } => {
            let config = IngestConfig { pr_source: prs, repo_id, ..Default::default() };
            let source = ingest::pr_source_from_config(&config);
            let snap = ingest::snapshot(&repo, source.as_ref(), &config)?;
            repograph_core::util::write_atomic(&out, snap.to_canonical_json().as_bytes())?;
            eprintln!(
                "{} files, {} commits, {} pull requests -> {}",
                snap.files.len(),
                snap.commits.len(),
                snap.pull_requests.len(),
                out.display()
            );
        }
        Command::Build { snapshot, out, graphml } => {
            let g = kgraph::build_graph(&load_snapshot(&snapshot)?)?;
            kgraph::export_json(&g, &out)?;
            if let Some(p) = graphml {
                kgraph::export_graphml(&g, &p)?;
            }
            print_json(&g.stats())?;
        }
        Command::Update { graph, snapshot } => {
            let g = load_graph(&graph)?;
            let (next, report) = kgraph::apply_delta(&g, &load_snapshot(&snapshot)?)?;
            kgraph::export_json(&next, &graph)?;
            print_json(&json!({"graph_version": next.version, "delta": report}))?;
        }
        Command::Stats { graph } => {
            let g = load_graph(&graph)?;
            print_json(&json!({"graph_version": g.version, "provenance": g.provenance, "stats": g.stats()}))?;
        }
        Command::Export { graph, format, out } => {
            let g = load_graph(&graph)?;
            match format {
                ExportFormat::Json => kgraph::export_json(&g, &out)?,
                ExportFormat::Graphml => kgraph::export_graphml(&g, &out)?,
            }
        }
        Command::Train(TrainCommand::Deepgraph { mode, loss, graph, seed, epochs, out }) => {
            train_deepgraph(mode, loss, &graph, seed, epochs, &out)?
        }
        Command::Train(TrainCommand::Kblam { graph, dataset, seed, epochs, out }) => {
            train_kblam(&graph, &dataset, seed, epochs, &out)?
        }
        Command::Dataset(DatasetCommand::Generate { graph, train, val, seed, out }) => {
            let g = load_graph(&graph)?;
            let ds = kblam::generate_dataset(&g, &TemplateConfig::default(), (train, val), seed)?;
            ds.save(&out)?;
            eprintln!("{} train / {} val samples -> {}", ds.train.len(), ds.val.len(), out.display());
        }
        Command::Embed(EmbedCommand::Build { graph, out, seed }) => {
            let g = load_graph(&graph)?;
            let enc = make_encoder(None)?;
            let feats = features(&g, enc.as_ref())?;
            let index = embed::build_embeddings(&g, &feats, &WalkConfig { seed, ..Default::default() })?;
            index.save(&out)?;
            eprintln!("{} nodes indexed -> {}", index.len(), out.display());
        }
        Command::Embed(EmbedCommand::Query { index, text, k }) => {
            let index = EmbeddingIndex::load(&index)?;
            let enc = make_encoder(None)?;
            for (id, score) in embed::query_topk(&index, enc.as_ref(), &text, k)? {
                print_json(&json!({"id": id, "score": score}))?;
            }
        }
        Command::Query { text, source, backend, k } => {
            let (engines, router_cfg) = engines_from(&source)?;
            let decision = router::route_with_override(&text, parse_backend(backend.as_deref())?, &router_cfg);
            let answer = router::dispatch(&decision, &text, &engines, k)?;
            println!("{}", serde_json::to_string_pretty(&answer)?);
        }
        Command::Serve { config, bind } => {
            let mut cfg = ServiceConfig::load(&config)?;
            if let Some(b) = bind {
                cfg.server.bind = b;
            }
            tokio::runtime::Runtime::new()?.block_on(service::serve(cfg))?;
        }
        Command::Memory(MemoryCommand::List { memory, backend, since }) => {
            let store = MemoryStore::open(&memory)?;
            let since = since
                .map(|s| chrono::DateTime::parse_from_rfc3339(&s).map(|t| t.to_utc()))
                .transpose()
                .context("--since must be an RFC 3339 timestamp")?;
            let filter = MemoryFilter { since, backend: parse_backend(backend.as_deref())? };
            for r in store.list(&filter) {
                print_json(&r)?;
            }
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
