use std::path::{Path, PathBuf};
use std::thread::sleep;
use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde_json::Value;

use super::types::{PrState, PullRequest};
use super::IngestError;

#[derive(Debug, Clone)]
pub enum PrSource {
    /// Directory of `pr_<number>.json` records.
    Fixture(PathBuf),
    Remote(RemoteSource),
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// GitHub-compatible REST endpoint, e.g. `https://api.github.com/repos/o/r`.
#[derive(Debug, Clone)]
pub struct RemoteSource {
    pub base_url: String,
    pub token: Option<String>,
    pub per_page: u32,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl RemoteSource {
    pub fn new(base_url: &str, token: Option<String>) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            token,
            per_page: 100,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(30),
        }
    }
}

/// All pull requests from the source, ordered by number.
pub fn fetch_pull_requests(source: &PrSource) -> Result<Vec<PullRequest>, IngestError> {
    let mut prs = match source {
        PrSource::Fixture(dir) => read_fixture_dir(dir)?,
        PrSource::Remote(remote) => fetch_remote(remote)?,
    };
    prs.sort_by_key(|p| p.number);
    Ok(prs)
}

fn read_fixture_dir(dir: &Path) -> Result<Vec<PullRequest>, IngestError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let is_record = name
            .strip_prefix("pr_")
            .and_then(|r| r.strip_suffix(".json"))
            .is_some_and(|n| n.parse::<u64>().is_ok());
        if !is_record {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        match serde_json::from_str::<PullRequest>(&text) {
            Ok(pr) if pr.is_consistent() => out.push(pr),
            Ok(_) => log_malformed(name, "merged record must be closed with merged_at"),
            Err(e) => log_malformed(name, &e.to_string()),
        }
    }
    Ok(out)
}

fn log_malformed(source_name: &str, reason: &str) {
    let err = IngestError::MalformedRecord {
        source_name: source_name.to_string(),
        reason: reason.to_string(),
    };
    tracing::warn!(error = %err, "skipping pull request record");
}

fn fetch_remote(remote: &RemoteSource) -> Result<Vec<PullRequest>, IngestError> {
    let client = Client::builder()
        .timeout(remote.timeout)
        .user_agent("repograph")
        .build()
        .map_err(|e| IngestError::Transport(e.to_string()))?;
    let mut out = Vec::new();
    let mut next = Some(format!(
        "{}/pulls?state=all&per_page={}&page=1",
        remote.base_url, remote.per_page
    ));
    while let Some(url) = next.take() {
        let resp = get_with_retry(&client, remote, &url)?;
        next = next_link(&resp);
        let page: Value = resp
            .json()
            .map_err(|e| IngestError::Transport(e.to_string()))?;
        let Some(items) = page.as_array() else {
            return Err(IngestError::MalformedRecord {
                source_name: url,
                reason: "expected a JSON array".into(),
            });
        };
        for item in items {
            match pr_from_api(item) {
                Ok(mut pr) => {
                    pr.commit_shas = fetch_commit_shas(&client, remote, pr.number)?;
                    out.push(pr);
                }
                Err(reason) => log_malformed(&url, &reason),
            }
        }
    }
    Ok(out)
}

fn fetch_commit_shas(
    client: &Client,
    remote: &RemoteSource,
    number: u64,
) -> Result<Vec<String>, IngestError> {
    let mut shas = Vec::new();
    let mut next = Some(format!(
        "{}/pulls/{number}/commits?per_page={}&page=1",
        remote.base_url, remote.per_page
    ));
    while let Some(url) = next.take() {
        let resp = get_with_retry(client, remote, &url)?;
        next = next_link(&resp);
        let page: Value = resp
            .json()
            .map_err(|e| IngestError::Transport(e.to_string()))?;
        for c in page.as_array().into_iter().flatten() {
            if let Some(sha) = c.get("sha").and_then(Value::as_str) {
                shas.push(sha.to_string());
            }
        }
    }
    Ok(shas)
}

fn get_with_retry(
    client: &Client,
    remote: &RemoteSource,
    url: &str,
) -> Result<Response, IngestError> {
    let mut attempt = 0;
    loop {
        let mut req = client
            .get(url)
            .header("Accept", "application/vnd.github+json");
        if let Some(token) = &remote.token {
            req = req.bearer_auth(token);
        }
        let transient = match req.send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    return Ok(resp);
                }
                if let Some(reset) = rate_limit_reset(&resp) {
                    return Err(IngestError::RateLimited { reset });
                }
                if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
                    return Err(IngestError::AuthFailed(format!("{status} from {url}")));
                }
                if !status.is_server_error() && status != StatusCode::TOO_MANY_REQUESTS {
                    return Err(IngestError::Transport(format!("{status} from {url}")));
                }
                format!("{status} from {url}")
            }
            Err(e) => e.to_string(),
        };
        if attempt >= remote.retry.max_retries {
            return Err(IngestError::Transport(transient));
        }
        let delay = remote.retry.base_delay * 2u32.pow(attempt);
        tracing::debug!(%url, attempt, ?delay, "retrying after transient failure");
        sleep(delay);
        attempt += 1;
    }
}

fn rate_limit_reset(resp: &Response) -> Option<i64> {
    let status = resp.status();
    if status != StatusCode::FORBIDDEN && status != StatusCode::TOO_MANY_REQUESTS {
        return None;
    }
    let header = |name: &str| {
        resp.headers()
            .get(name)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string)
    };
    let exhausted = header("x-ratelimit-remaining").as_deref() == Some("0");
    let reset = header("x-ratelimit-reset").and_then(|v| v.parse::<i64>().ok());
    match (exhausted, reset) {
        (true, Some(r)) => Some(r),
        (true, None) => Some(0),
        _ if status == StatusCode::TOO_MANY_REQUESTS => {
            let wait = header("retry-after").and_then(|v| v.parse::<i64>().ok())?;
            Some(chrono::Utc::now().timestamp() + wait)
        }
        _ => None,
    }
}

fn next_link(resp: &Response) -> Option<String> {
    let link = resp.headers().get("link")?.to_str().ok()?;
    link.split(',').find_map(|part| {
        let (url, rel) = part.split_once(';')?;
        rel.contains("rel=\"next\"").then(|| {
            url.trim()
                .trim_start_matches('<')
                .trim_end_matches('>')
                .to_string()
        })
    })
}

fn parse_time(v: &Value) -> Option<i64> {
    let s = v.as_str()?;
    chrono::DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.timestamp())
}

fn pr_from_api(item: &Value) -> Result<PullRequest, String> {
    let number = item
        .get("number")
        .and_then(Value::as_u64)
        .ok_or("missing number")?;
    let state = match item.get("state").and_then(Value::as_str) {
        Some("open") => PrState::Open,
        Some("closed") => PrState::Closed,
        other => return Err(format!("unknown state {other:?}")),
    };
    let merged_at = item.get("merged_at").and_then(parse_time);
    Ok(PullRequest {
        number,
        title: item
            .get("title")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        body: item
            .get("body")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
        author_login: item
            .pointer("/user/login")
            .and_then(Value::as_str)
            .ok_or("missing user.login")?
            .to_string(),
        state,
        merged: merged_at.is_some(),
        created_at: item.get("created_at").and_then(parse_time),
        merged_at,
        commit_shas: Vec::new(),
        unresolved_commit_shas: Vec::new(),
    })
}
