//! Episodic memory: an append-only JSON-lines file.
//!
//! Each line is either a record or a feedback event for an earlier record;
//! loading folds the two. Lines are written whole and synced before the
//! caller sees the result, and an unterminated final line (a crash during
//! append) is dropped on open.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::router::{Backend, DecisionSource, QueryType, RankedId, RoutedAnswer};

pub const MEMORY_SCHEMA_VERSION: u32 = 1;
const SUMMARY_TOP: usize = 10;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("no record {0}")]
    UnknownRecord(u64),
    #[error("record {0} already has different feedback")]
    FeedbackConflict(u64),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub rating: Rating,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSummary {
    pub query_type: QueryType,
    pub backend: Backend,
    pub source: DecisionSource,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSummary {
    pub top: Vec<RankedId>,
    pub graph_version: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub record_id: u64,
    pub timestamp: DateTime<Utc>,
    pub query: String,
    pub decision: DecisionSummary,
    pub answer: AnswerSummary,
    #[serde(default)]
    pub feedback: Option<Feedback>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Record {
        schema_version: u32,
        #[serde(flatten)]
        record: EpisodicRecord,
    },
    Feedback {
        schema_version: u32,
        record_id: u64,
        timestamp: DateTime<Utc>,
        feedback: Feedback,
    },
}

#[derive(Debug, Default, Clone)]
pub struct MemoryFilter {
    pub since: Option<DateTime<Utc>>,
    pub backend: Option<Backend>,
}

struct Inner {
    file: File,
    records: Vec<EpisodicRecord>,
}

/// The single writer for one memory file.
pub struct MemoryStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl MemoryStore {
    pub fn open(path: &Path) -> Result<Self, MemoryError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        let complete = match text.rfind('\n') {
            Some(i) => i + 1,
            None => 0,
        };
        if complete < text.len() {
            tracing::warn!("dropping unterminated trailing line in {}", path.display());
            file.set_len(complete as u64)?;
            file.seek(std::io::SeekFrom::End(0))?;
        }
        let mut records: Vec<EpisodicRecord> = Vec::new();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| MemoryError::Corrupt { path: path.to_path_buf(), line: i + 1, message };
            let parsed: Line = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            match parsed {
                Line::Record { schema_version, record } => {
                    if schema_version != MEMORY_SCHEMA_VERSION {
                        return Err(corrupt(format!("unsupported schema version {schema_version}")));
                    }
                    if records.last().is_some_and(|r| r.record_id >= record.record_id) {
                        return Err(corrupt("record ids must increase".into()));
                    }
                    records.push(record);
                }
                Line::Feedback { record_id, feedback, .. } => {
                    let r = records
                        .iter_mut()
                        .find(|r| r.record_id == record_id)
                        .ok_or_else(|| corrupt(format!("feedback for unknown record {record_id}")))?;
                    r.feedback = Some(feedback);
                }
            }
        }
        Ok(Self { path: path.to_path_buf(), inner: Mutex::new(Inner { file, records }) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_line(file: &mut File, line: &Line) -> Result<(), MemoryError> {
        let mut bytes = serde_json::to_vec(line).expect("memory lines serialise");
        bytes.push(b'\n');
        file.write_all(&bytes)?;
        file.sync_data()?;
        Ok(())
    }

    pub fn append(&self, answer: &RoutedAnswer) -> Result<EpisodicRecord, MemoryError> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let record = EpisodicRecord {
            record_id: inner.records.last().map_or(1, |r| r.record_id + 1),
            timestamp: Utc::now(),
            query: answer.query.clone(),
            decision: DecisionSummary {
                query_type: answer.decision.query_type,
                backend: answer.decision.backend,
                source: answer.decision.source,
                reason: answer.decision.reason.clone(),
            },
            answer: AnswerSummary {
                top: answer.ranked.iter().take(SUMMARY_TOP).cloned().collect(),
                graph_version: answer.graph_version,
                latency_ms: answer.latency_ms,
            },
            feedback: None,
        };
        let line = Line::Record { schema_version: MEMORY_SCHEMA_VERSION, record: record.clone() };
        Self::write_line(&mut inner.file, &line)?;
        inner.records.push(record.clone());
        Ok(record)
    }

    /// Same feedback twice is accepted; different feedback is a conflict.
    pub fn record_feedback(&self, record_id: u64, feedback: Feedback) -> Result<EpisodicRecord, MemoryError> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let pos = inner
            .records
            .binary_search_by_key(&record_id, |r| r.record_id)
            .map_err(|_| MemoryError::UnknownRecord(record_id))?;
        match &inner.records[pos].feedback {
            Some(f) if *f == feedback => return Ok(inner.records[pos].clone()),
            Some(_) => return Err(MemoryError::FeedbackConflict(record_id)),
            None => {}
        }
        let line = Line::Feedback {
            schema_version: MEMORY_SCHEMA_VERSION,
            record_id,
            timestamp: Utc::now(),
            feedback: feedback.clone(),
        };
        Self::write_line(&mut inner.file, &line)?;
        inner.records[pos].feedback = Some(feedback);
        Ok(inner.records[pos].clone())
    }

    pub fn get(&self, record_id: u64) -> Option<EpisodicRecord> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner.records.iter().find(|r| r.record_id == record_id).cloned()
    }

    /// Records in insertion order; filters combine with AND.
    pub fn list(&self, filter: &MemoryFilter) -> Vec<EpisodicRecord> {
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner
            .records
            .iter()
            .filter(|r| filter.since.is_none_or(|s| r.timestamp >= s))
            .filter(|r| filter.backend.is_none_or(|b| r.decision.backend == b))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
