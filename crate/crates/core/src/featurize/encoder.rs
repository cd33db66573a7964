use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::util::{fnv1a64, fnv1a64_seeded};

use super::FeaturizeError;

pub const TEXT_DIM: usize = 768;

const SIGN_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Maps text to a fixed-width dense vector.
pub trait TextEncoder: Send + Sync {
    fn encoder_id(&self) -> String;

    fn dim(&self) -> usize;

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, FeaturizeError>;
}

/// Splits on non-alphanumeric characters after lowercasing.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Character 3-grams of `<token>`.
pub fn subwords(token: &str) -> Vec<String> {
    let chars: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Deterministic hashed-subword bag encoder.
#[derive(Debug, Clone, Copy)]
pub struct HashedSubwordEncoder {
    dim: usize,
}

impl Default for HashedSubwordEncoder {
    fn default() -> Self {
        Self { dim: TEXT_DIM }
    }
}

impl HashedSubwordEncoder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim }
    }

    /// Bucket index and sign for one subword.
    pub fn bucket(&self, gram: &str) -> (usize, f64) {
        let idx = (fnv1a64(gram.as_bytes()) % self.dim as u64) as usize;
        let sign = if fnv1a64_seeded(SIGN_SEED, gram.as_bytes()) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        (idx, sign)
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return v;
        }
        for t in &tokens {
            for g in subwords(t) {
                let (i, s) = self.bucket(&g);
                v[i] += s;
            }
        }
        let n = tokens.len() as f64;
        v.iter_mut().for_each(|x| *x /= n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl TextEncoder for HashedSubwordEncoder {
    fn encoder_id(&self) -> String {
        format!("hashed-subword-3gram-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, FeaturizeError> {
        Ok(texts.iter().map(|t| self.encode(t)).collect())
    }
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct InfoResponse {
    dimension: usize,
    #[serde(default)]
    model: Option<String>,
}

/// Client for an external encoder service (`POST /encode`, `GET /info`).
pub struct HttpEncoder {
    base: String,
    client: reqwest::blocking::Client,
    dim: usize,
    model: String,
}

impl HttpEncoder {
    /// Connects and checks the announced dimension.
    pub fn connect(base: &str, timeout: Duration) -> Result<Self, FeaturizeError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(unavailable)?;
        let base = base.trim_end_matches('/').to_string();
        let info: InfoResponse = client
            .get(format!("{base}/info"))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(unavailable)?;
        Ok(Self {
            model: info.model.unwrap_or_else(|| "remote".into()),
            base,
            client,
            dim: info.dimension,
        })
    }
}

fn unavailable(e: impl std::fmt::Display) -> FeaturizeError {
    FeaturizeError::EncoderUnavailable(e.to_string())
}

impl TextEncoder for HttpEncoder {
    fn encoder_id(&self) -> String {
        format!("http:{}@{}", self.model, self.base)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, FeaturizeError> {
        let resp: EncodeResponse = self
            .client
            .post(format!("{}/encode", self.base))
            .json(&EncodeRequest { texts })
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(unavailable)?;
        if resp.vectors.len() != texts.len() || resp.vectors.iter().any(|v| v.len() != self.dim) {
            return Err(FeaturizeError::EncoderUnavailable(
                "response shape does not match request".into(),
            ));
        }
        Ok(resp.vectors)
    }
}

/// Encodes one text, falling back to the default encoder when `encoder` fails.
pub fn encode_text(encoder: &dyn TextEncoder, text: &str) -> Vec<f64> {
    match encoder.encode_batch(&[text]) {
        Ok(mut v) => v.pop().unwrap_or_default(),
        Err(e) => {
            tracing::warn!("text encoder failed, using default: {e}");
            HashedSubwordEncoder::with_dim(encoder.dim()).encode(text)
        }
    }
}
