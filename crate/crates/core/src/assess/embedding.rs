//! Embedding providers and cosine matching.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::similarity::word_tokens;
use crate::qgen::post_edit::ProviderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingLevel {
    WordAverage,
    Sentence,
}

pub trait EmbeddingProvider: Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError>;

    /// True when every vector component is >= 0, so cosine already lies in [0,1].
    fn non_negative(&self) -> bool {
        false
    }
}

/// Offline provider: each word and character trigram hashes to a random
/// +-1 direction, and a text is the sum of its feature directions.
/// Texts sharing many words or trigrams point the same way.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 512 }
    }
}

impl HashEmbedder {
    fn add_feature(&self, v: &mut [f32], feature: &str) {
        let mut out = Vec::with_capacity(self.dim / 8 + 32);
        let mut block = 0u32;
        while out.len() * 8 < self.dim {
            let mut h = Sha256::new();
            h.update(block.to_le_bytes());
            h.update(feature.as_bytes());
            out.extend_from_slice(&h.finalize());
            block += 1;
        }
        for (i, x) in v.iter_mut().enumerate() {
            let bit = (out[i / 8] >> (i % 8)) & 1;
            *x += if bit == 1 { 1.0 } else { -1.0 };
        }
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0; self.dim];
        for word in word_tokens(text) {
            self.add_feature(&mut v, &format!("w:{word}"));
            let padded: Vec<char> = format!("#{word}#").chars().collect();
            for tri in padded.windows(3) {
                self.add_feature(&mut v, &format!("t:{}", tri.iter().collect::<String>()));
            }
        }
        v
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for an embeddings endpoint speaking `{model, input}` ->
/// `{data: [{embedding}]}`.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    /// `api_key_env` names the environment variable holding the key.
    pub fn new(endpoint: &str, model: &str, api_key_env: Option<&str>, timeout: Duration) -> Result<Self, ProviderError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ProviderError(format!("environment variable {var} is not set")))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError(e.to_string()))?;
        Ok(HttpEmbedder {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingsReply {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f32>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let mut req = self
            .client
            .post(&self.endpoint)
            .json(&json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(ProviderError(format!("HTTP {}: {body}", status.as_u16())));
        }
        let reply: EmbeddingsReply = resp.json().map_err(|e| ProviderError(format!("malformed embeddings: {e}")))?;
        if reply.data.len() != texts.len() {
            return Err(ProviderError(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                reply.data.len()
            )));
        }
        Ok(reply.data.into_iter().map(|d| d.embedding).collect())
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingScore {
    /// Similarity mapped into [0,1].
    pub score: f64,
    pub raw_cosine: f64,
}

fn mean(vectors: &[Vec<f32>]) -> Vec<f32> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut out = vec![0.0f32; dim];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vectors.len().max(1) as f32;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

fn vector_for(provider: &dyn EmbeddingProvider, text: &str, level: EmbeddingLevel) -> Result<Vec<f32>, ProviderError> {
    match level {
        EmbeddingLevel::Sentence => provider
            .embed(&[text])?
            .pop()
            .ok_or_else(|| ProviderError("provider returned no vector".into())),
        EmbeddingLevel::WordAverage => {
            let words = word_tokens(text);
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            Ok(mean(&provider.embed(&refs)?))
        }
    }
}

pub fn embedding_similarity(
    provider: &dyn EmbeddingProvider,
    a: &str,
    b: &str,
    level: EmbeddingLevel,
) -> Result<EmbeddingScore, ProviderError> {
    let (ta, tb) = (word_tokens(a), word_tokens(b));
    if ta.is_empty() || tb.is_empty() {
        let same = ta == tb;
        return Ok(EmbeddingScore {
            score: if same { 1.0 } else { 0.0 },
            raw_cosine: if same { 1.0 } else { 0.0 },
        });
    }
    let va = vector_for(provider, a, level)?;
    let vb = vector_for(provider, b, level)?;
    if va.len() != vb.len() {
        return Err(ProviderError("embedding dimensions differ".into()));
    }
    let raw = cosine(&va, &vb);
    let score = if provider.non_negative() { raw.max(0.0) } else { (raw + 1.0) / 2.0 };
    Ok(EmbeddingScore { score, raw_cosine: raw })
}
