//! Deterministic intent rules used when no model endpoint answers.
//!
//! Rules, first match wins:
//! 1. an aggregation cue ("how many", "count", "most", superlatives, ...) gives Aggregation;
//! 2. two or more distinct entity families (PR, commit, file, function, author)
//!    together with a relational verb give Multi-hop;
//! 3. an exact identifier (sha-like token, `#N`, quoted name, path) with at
//!    most one relational verb gives Single-hop;
//! 4. error or description phrasing without any entity cue gives Semantic;
//! 5. anything else is Complex.

use std::sync::LazyLock;

use regex::Regex;

use super::{DecisionSource, QueryType, RouterError, RoutingDecision};

pub const FALLBACK_RULES_VERSION: u32 = 1;

fn re(p: &str) -> Regex {
    Regex::new(p).unwrap()
}

static AGGREGATION: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(how many|number of|counts?|counting|most|least|highest|lowest|largest|smallest|biggest|fewest|greatest|busiest|frequently|frequent|often|average|total|top \d+)\b")
});

static ENTITY_FAMILIES: LazyLock<[(&'static str, Regex); 5]> = LazyLock::new(|| {
    [
        ("pull request", re(r"\b(prs?|pull[ -]requests?|merge[ -]requests?)\b")),
        ("commit", re(r"\bcommits?\b")),
        ("file", re(r"\b(files?|modules?)\b")),
        ("function", re(r"\b(functions?|methods?)\b")),
        ("author", re(r"\b(authors?|developers?|contributors?)\b")),
    ]
});

static RELATION: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(authored|wrote|written|writes|modif(y|ies|ied)|chang(e|es|ed)|touch(es|ed)?|edit(s|ed)?|updat(e|es|ed)|open(s|ed)?|clos(e|es|ed)|merg(e|es|ed)|review(s|ed)?|includ(e|es|ed)|contain(s|ed)?|defin(e|es|ed)|call(s|ed)?|import(s|ed)?|fix(es|ed)?|introduc(e|es|ed)|add(s|ed)?|remov(e|es|ed)|delet(e|es|ed)|creat(e|es|ed)|made|make|belong(s|ed)?|implement(s|ed)?)\b")
});

static SHA_LIKE: LazyLock<Regex> = LazyLock::new(|| re(r"\b[0-9a-f]{7,40}\b"));
static HASH_NUMBER: LazyLock<Regex> = LazyLock::new(|| re(r"#\d+\b"));
static QUOTED: LazyLock<Regex> = LazyLock::new(|| re(r#"[`'"][A-Za-z_][\w./:-]*[`'"]"#));
static PATH_LIKE: LazyLock<Regex> = LazyLock::new(|| re(r"\b[\w.-]+/[\w./-]*\w|\b[\w-]+\.py\b"));

static SEMANTIC: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(errors?|bugs?|issues?|fail(s|ed|ing|ures?)?|crash(es|ed|ing)?|exceptions?|broken|break(s|ing)?|problems?|wrong|slow|not working|getting|something|similar|related to|about|where is|where does|handl(e|es|ed|ing)|logic|deals? with|responsible for|code (that|for))\b")
});

fn exact_id(query: &str, lower: &str) -> Option<String> {
    let sha = SHA_LIKE
        .find_iter(lower)
        .find(|m| m.as_str().chars().any(|c| c.is_ascii_digit()));
    sha.or_else(|| HASH_NUMBER.find(lower))
        .or_else(|| QUOTED.find(query))
        .or_else(|| PATH_LIKE.find(query))
        .map(|m| m.as_str().to_string())
}

pub fn classify_fallback(query: &str) -> Result<RoutingDecision, RouterError> {
    if query.trim().is_empty() {
        return Err(RouterError::EmptyQuery);
    }
    let lower = query.to_lowercase();
    let decide = |t: QueryType, why: String| Ok(RoutingDecision::new(t, why, DecisionSource::Fallback));

    if let Some(m) = AGGREGATION.find(&lower) {
        return decide(QueryType::Aggregation, format!("rule 1: aggregation cue `{}`", m.as_str()));
    }
    let families: Vec<&str> =
        ENTITY_FAMILIES.iter().filter(|(_, r)| r.is_match(&lower)).map(|(n, _)| *n).collect();
    let relations = RELATION.find_iter(&lower).count();
    let id = exact_id(query, &lower);
    if families.len() >= 2 && relations > 0 {
        return decide(QueryType::MultiHop, format!("rule 2: relates {}", families.join(", ")));
    }
    if let Some(id) = &id {
        if relations <= 1 {
            return decide(QueryType::SingleHop, format!("rule 3: direct lookup on `{id}`"));
        }
    }
    if families.is_empty() && id.is_none() {
        if let Some(m) = SEMANTIC.find(&lower) {
            return decide(QueryType::Semantic, format!("rule 4: descriptive phrasing `{}`", m.as_str()));
        }
    }
    decide(QueryType::Complex, "rule 5: no specific pattern".to_string())
}
