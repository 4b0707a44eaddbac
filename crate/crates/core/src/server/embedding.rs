//! Optional embedding service used to score merge candidates.
//!
//! Protocol: `POST {endpoint}` with `{"inputs": ["key", ...]}`, answered by
//! `{"embeddings": [[f64, ...], ...]}` in input order.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::repair::{key_similarity, Similarity};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingClient {
    endpoint: String,
    http: reqwest::Client,
}

impl EmbeddingClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds with default settings");
        EmbeddingClient {
            endpoint: endpoint.into(),
            http,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub async fn embed(&self, keys: &[String]) -> Result<HashMap<String, Vec<f64>>, String> {
        let resp = self
            .http
            .post(&self.endpoint)
            .json(&EmbedRequest { inputs: keys })
            .send()
            .await
            .map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("embedding service answered {}", resp.status()));
        }
        let body: EmbedResponse = resp.json().await.map_err(|e| e.to_string())?;
        if body.embeddings.len() != keys.len() {
            return Err(format!(
                "expected {} embeddings, got {}",
                keys.len(),
                body.embeddings.len()
            ));
        }
        Ok(keys.iter().cloned().zip(body.embeddings).collect())
    }

    /// Similarity over `keys`, or the default rules when the service fails.
    pub async fn similarity_for(&self, keys: &[String]) -> Box<dyn Similarity> {
        match self.embed(keys).await {
            Ok(vectors) => Box::new(EmbeddingSimilarity { vectors }),
            Err(e) => {
                log::warn!("embedding service {} unavailable, using default similarity: {e}", self.endpoint);
                Box::new(crate::repair::DefaultSimilarity)
            }
        }
    }
}

/// Cosine similarity mapped to `[0, 1]` as `(1 + cos) / 2`. Keys without a
/// usable vector fall back to the default rules.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSimilarity {
    pub vectors: HashMap<String, Vec<f64>>,
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !(dot / (na * nb)).is_finite() {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

impl Similarity for EmbeddingSimilarity {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return 1.0;
        }
        match (self.vectors.get(a), self.vectors.get(b)) {
            (Some(u), Some(v)) => cosine(u, v).map_or_else(|| key_similarity(a, b), |c| (1.0 + c) / 2.0),
            _ => key_similarity(a, b),
        }
    }
}
