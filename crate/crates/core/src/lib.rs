//! Repository knowledge graphs and routed question answering.

pub mod deepgraph;
pub mod embed;
pub mod featurize;
pub mod ingest;
pub mod kblam;
pub mod kgraph;
pub mod numkernel;
pub mod router;
pub mod service;
pub mod util;
