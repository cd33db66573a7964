//! Query intent classification, backend selection and dispatch.

mod dispatch;
mod fallback;
mod llm;

pub use dispatch::{dispatch, Engines, RankedId, RoutedAnswer, Trace, CONTEXT_LIMIT};
pub use fallback::{classify_fallback, FALLBACK_RULES_VERSION};
pub use llm::{chat_completion, route, route_with_override, RouterConfig};

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prompt template; `{user_query}` is the only placeholder.
pub const PROMPT_TEMPLATE: &str = include_str!("prompt_v1.txt");
pub const PROMPT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("unparseable router response: {0}")]
    ParseError(String),
    #[error("router endpoint failed: {0}")]
    Transport(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend failed: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryType {
    SingleHop,
    MultiHop,
    Aggregation,
    Semantic,
    Complex,
}

impl QueryType {
    pub const ALL: [QueryType; 5] =
        [Self::SingleHop, Self::MultiHop, Self::Aggregation, Self::Semantic, Self::Complex];

    /// The spelling used in the prompt's answer format.
    pub fn label(self) -> &'static str {
        match self {
            Self::SingleHop => "Single-hop",
            Self::MultiHop => "Multi-hop",
            Self::Aggregation => "Aggregation",
            Self::Semantic => "Semantic",
            Self::Complex => "Complex",
        }
    }

    pub fn backend(self) -> Backend {
        match self {
            Self::SingleHop => Backend::DeepGraph,
            Self::MultiHop | Self::Aggregation | Self::Complex => Backend::KBLam,
            Self::Semantic => Backend::Embedding,
        }
    }

    fn from_normalized(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| normalize(t.label()) == s)
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Backend {
    KBLam,
    DeepGraph,
    Embedding,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Self::KBLam, Self::DeepGraph, Self::Embedding];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::KBLam => "KBLam",
            Self::DeepGraph => "DeepGraph",
            Self::Embedding => "Embedding",
        }
    }

    /// Case-, space- and hyphen-insensitive name lookup.
    pub fn parse(s: &str) -> Option<Self> {
        match normalize(s).as_str() {
            "kblam" => Some(Self::KBLam),
            "deepgraph" => Some(Self::DeepGraph),
            "embedding" | "embeddings" | "embeddingsearch" => Some(Self::Embedding),
            _ => None,
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionSource {
    Llm,
    Fallback,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub query_type: QueryType,
    pub backend: Backend,
    pub reason: String,
    pub source: DecisionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
    /// The model's backend disagreed with the canonical mapping and was replaced.
    #[serde(default)]
    pub corrected: bool,
    /// Why the endpoint was not used, when it was configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_error: Option<String>,
}

impl RoutingDecision {
    pub fn new(query_type: QueryType, reason: impl Into<String>, source: DecisionSource) -> Self {
        Self {
            query_type,
            backend: query_type.backend(),
            reason: reason.into(),
            source,
            raw_response: None,
            corrected: false,
            llm_error: None,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.query_type.backend() == self.backend
    }
}

fn normalize(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

pub fn render_prompt(query: &str) -> Result<String, RouterError> {
    if query.trim().is_empty() {
        return Err(RouterError::EmptyQuery);
    }
    Ok(PROMPT_TEMPLATE.replace("{user_query}", query))
}

static TYPE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)query[ _-]*type\W*?:\s*(.+)$").unwrap());
static APPROACH_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)recommended[ _-]*approach\W*?:\s*(.+)$").unwrap());
static REASON_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?im)reason\W*?:\s*(.+)$").unwrap());

/// Leading label of a value such as `**Multi hop** (spans PRs)`. Template
/// echoes like `<Single-hop/Multi-hop/...>` are rejected.
fn leading_value(raw: &str) -> Option<String> {
    let v = raw.trim().trim_matches(|c: char| c == '*' || c == '`' || c == '"' || c == '\'' || c == '_');
    if v.contains('/') || v.starts_with('<') {
        return None;
    }
    let head: String = v
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '-' || *c == ' ')
        .collect();
    let words: Vec<&str> = head.split_whitespace().collect();
    // "Multi hop", "Single - hop", "Deep Graph", "Embedding search"
    let joined = words.iter().take(3).copied().collect::<Vec<_>>().join("");
    Some(normalize(&joined))
}

fn last_match<T>(re: &Regex, text: &str, f: impl Fn(&str) -> Option<T>) -> Option<T> {
    re.captures_iter(text).filter_map(|c| leading_value(&c[1]).and_then(|v| f(&v))).last()
}

fn parse_type(v: &str) -> Option<QueryType> {
    QueryType::from_normalized(v).or_else(|| {
        QueryType::ALL.into_iter().find(|t| v.starts_with(&normalize(t.label())))
    })
}

fn parse_backend(v: &str) -> Option<Backend> {
    Backend::parse(v).or_else(|| {
        [("kblam", Backend::KBLam), ("deepgraph", Backend::DeepGraph), ("embedding", Backend::Embedding)]
            .into_iter()
            .find(|(p, _)| v.starts_with(p))
            .map(|(_, b)| b)
    })
}

/// Reads the labelled answer lines from a model response. The last valid
/// occurrence of each label wins; the backend is forced onto the canonical
/// mapping and `corrected` records whether that changed anything.
pub fn parse_response(text: &str) -> Result<RoutingDecision, RouterError> {
    let query_type = last_match(&TYPE_LINE, text, parse_type)
        .ok_or_else(|| RouterError::ParseError("no recognizable `Query Type:` line".into()))?;
    let stated = last_match(&APPROACH_LINE, text, parse_backend)
        .ok_or_else(|| RouterError::ParseError("no recognizable `Recommended Approach:` line".into()))?;
    let reason = REASON_LINE
        .captures_iter(text)
        .map(|c| c[1].trim().trim_matches('*').trim().to_string())
        .filter(|r| !r.starts_with('<'))
        .last()
        .unwrap_or_default();
    let mut d = RoutingDecision::new(query_type, reason, DecisionSource::Llm);
    d.corrected = stated != d.backend;
    d.raw_response = Some(text.to_string());
    Ok(d)
}
