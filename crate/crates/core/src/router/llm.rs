use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{classify_fallback, parse_response, render_prompt, Backend, DecisionSource, QueryType, RouterError, RoutingDecision};

pub const MAX_TIMEOUT_S: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    /// Chat-completion URL; the rule fallback is used when unset.
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self { endpoint: None, model: "intent-classifier".into(), timeout_s: 10.0, max_retries: 1 }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_s > 0.0 && self.timeout_s <= MAX_TIMEOUT_S) {
            return Err(format!("router.timeout_s must be in (0, {MAX_TIMEOUT_S}]"));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

/// One chat-completion round trip: `{model, messages, temperature: 0}` in,
/// `choices[0].message.content` out. Blocking.
pub fn chat_completion(config: &RouterConfig, prompt: &str) -> Result<String, RouterError> {
    let endpoint = config.endpoint.as_deref().ok_or_else(|| RouterError::Transport("no endpoint".into()))?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(config.timeout_s.clamp(0.001, MAX_TIMEOUT_S)))
        .build()
        .map_err(|e| RouterError::Transport(e.to_string()))?;
    let body = json!({
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    });
    let mut last = String::new();
    for _ in 0..=config.max_retries {
        let result = client
            .post(endpoint)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json::<ChatResponse>());
        match result {
            Ok(resp) => {
                return resp
                    .choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content)
                    .ok_or_else(|| RouterError::Transport("response has no choices".into()));
            }
            Err(e) if e.is_timeout() => last = format!("timeout after {}s", config.timeout_s),
            Err(e) => last = e.to_string(),
        }
    }
    Err(RouterError::Transport(last))
}

fn fallback_or_default(query: &str) -> RoutingDecision {
    classify_fallback(query).unwrap_or_else(|_| {
        RoutingDecision::new(QueryType::Complex, "empty query", DecisionSource::Fallback)
    })
}

/// Never fails: endpoint or parse problems fall back to the rules and are
/// recorded in `llm_error`.
pub fn route(query: &str, config: &RouterConfig) -> RoutingDecision {
    if config.endpoint.is_none() {
        return fallback_or_default(query);
    }
    let attempt = render_prompt(query).and_then(|prompt| {
        let raw = chat_completion(config, &prompt)?;
        parse_response(&raw).map_err(|e| match e {
            RouterError::ParseError(m) => RouterError::ParseError(format!("{m}; response was {raw:?}")),
            other => other,
        })
    });
    match attempt {
        Ok(d) => d,
        Err(e) => {
            tracing::info!("router falling back to rules: {e}");
            let mut d = fallback_or_default(query);
            d.llm_error = Some(e.to_string());
            d
        }
    }
}

/// The caller picked the backend, so the endpoint is skipped. The query type
/// is the rule-based one when it maps to that backend, otherwise the
/// backend's canonical type.
pub fn route_with_override(query: &str, backend: Option<Backend>, config: &RouterConfig) -> RoutingDecision {
    let Some(backend) = backend else { return route(query, config) };
    let routed = fallback_or_default(query);
    let query_type = if routed.query_type.backend() == backend {
        routed.query_type
    } else {
        match backend {
            Backend::DeepGraph => QueryType::SingleHop,
            Backend::Embedding => QueryType::Semantic,
            Backend::KBLam => QueryType::Complex,
        }
    };
    RoutingDecision {
        query_type,
        backend,
        reason: format!("backend chosen by caller; rules said {} ({})", routed.backend, routed.reason),
        source: DecisionSource::Override,
        raw_response: None,
        corrected: false,
        llm_error: None,
    }
}
