//! JSON-over-HTTP client for the provider protocol.
//!
//! 2xx bodies are parsed per route; 413 means the prompt overflowed the model
//! context; any other 4xx is a bad response. 5xx, timeouts and connection
//! failures are retried with exponential backoff (base `backoff_base_ms`,
//! factor 2) until `max_retries` is exhausted.

use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use serde::Serialize;

use super::cache::{CacheKey, ResponseCache};
use super::wire::{self, CompleteRequest, ImageRequest, TextRequest};
use super::{
    Captioner, CompletionParams, ImageEmbedder, LanguageModel, OieExtractor, ProviderConfig, ProviderError,
    SceneGraphGenerator, SceneTriple, TextEmbedder, Tool,
};
use crate::domain::{EmbeddingVec, FrameRef};

pub struct HttpClient {
    config: ProviderConfig,
    agent: ureq::Agent,
    cache: Option<Arc<ResponseCache>>,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient")
            .field("endpoint", &self.config.endpoint)
            .field("model_id", &self.config.model_id)
            .finish()
    }
}

enum Attempt {
    Done(Vec<u8>),
    Retry(String),
    Fail(ProviderError),
}

impl HttpClient {
    pub fn new(config: ProviderConfig, cache: Option<Arc<ResponseCache>>) -> Result<Self, ProviderError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent, cache })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn url(&self, tool: Tool) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), tool.route())
    }

    fn attempt(&self, tool: Tool, body: &[u8]) -> Attempt {
        let response = self
            .agent
            .post(&self.url(tool))
            .header("content-type", "application/json")
            .send(body);
        let mut response = match response {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        let bytes = match response.body_mut().read_to_vec() {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match status {
            200..=299 => Attempt::Done(bytes),
            // the server knows its limit; the prompt size is filled in by the caller
            413 => Attempt::Fail(ProviderError::ContextOverflow { tokens: 0, limit: 0 }),
            400..=499 => Attempt::Fail(ProviderError::bad(
                tool,
                format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes)),
            )),
            _ => Attempt::Retry(format!("HTTP {status}")),
        }
    }

    /// POST `request` to the route of `tool` and return the validated body bytes.
    pub fn call<R: Serialize>(&self, tool: Tool, request: &R) -> Result<Vec<u8>, ProviderError> {
        // serde_json::Value keeps object keys sorted, which makes the bytes canonical
        let canonical =
            serde_json::to_vec(&serde_json::to_value(request).map_err(|e| ProviderError::Config(e.to_string()))?)
                .expect("json value serializes");
        let key = CacheKey::new(tool.name(), &self.config.model_id, &canonical);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                return Ok(hit);
            }
        }
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for n in 0..attempts {
            if n > 0 {
                let wait = self.config.backoff_base_ms.saturating_mul(1 << (n - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(tool, &canonical) {
                Attempt::Done(bytes) => {
                    wire::validate_response(tool, &bytes)?;
                    if let Some(cache) = &self.cache {
                        cache.put(&key, &bytes)?;
                    }
                    return Ok(bytes);
                }
                Attempt::Retry(e) => last_error = e,
                Attempt::Fail(e) => return Err(e),
            }
        }
        Err(ProviderError::Unavailable {
            tool,
            attempts,
            last_error,
        })
    }

    fn image_request(frame: &FrameRef) -> Result<ImageRequest, ProviderError> {
        let bytes = std::fs::read(&frame.source).map_err(|e| ProviderError::SourceUnavailable {
            source_path: frame.source.clone(),
            detail: e.to_string(),
        })?;
        Ok(ImageRequest {
            image_b64: base64::engine::general_purpose::STANDARD.encode(bytes),
        })
    }

    fn embedding(&self, tool: Tool, body: &[u8]) -> Result<EmbeddingVec, ProviderError> {
        let r: wire::EmbeddingResponse = wire::parse(tool, body)?;
        EmbeddingVec::new(r.embedding).map_err(|e| ProviderError::bad(tool, e.to_string()))
    }
}

impl ImageEmbedder for HttpClient {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn embed_image(&self, frame: &FrameRef) -> Result<EmbeddingVec, ProviderError> {
        let body = self.call(Tool::EmbedImage, &Self::image_request(frame)?)?;
        self.embedding(Tool::EmbedImage, &body)
    }
}

impl TextEmbedder for HttpClient {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVec, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let body = self.call(Tool::EmbedText, &TextRequest { text: text.into() })?;
        self.embedding(Tool::EmbedText, &body)
    }
}

impl Captioner for HttpClient {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn generate_caption(&self, frame: &FrameRef) -> Result<String, ProviderError> {
        let body = self.call(Tool::Caption, &Self::image_request(frame)?)?;
        wire::parse::<wire::CaptionResponse>(Tool::Caption, &body).map(|r| r.caption)
    }
}

impl SceneGraphGenerator for HttpClient {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn generate_scene_graph(&self, frame: &FrameRef) -> Result<Vec<SceneTriple>, ProviderError> {
        let body = self.call(Tool::SceneGraph, &Self::image_request(frame)?)?;
        let r: wire::SceneGraphResponse = wire::parse(Tool::SceneGraph, &body)?;
        Ok(r.triples.into_iter().map(Into::into).collect())
    }
}

impl OieExtractor for HttpClient {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn extract_oie(&self, sentence: &str) -> Result<Vec<Vec<String>>, ProviderError> {
        let body = self.call(Tool::Oie, &TextRequest { text: sentence.into() })?;
        wire::parse::<wire::OieResponse>(Tool::Oie, &body).map(|r| r.tuples)
    }
}

impl LanguageModel for HttpClient {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, ProviderError> {
        let body = self
            .call(
                Tool::Complete,
                &CompleteRequest {
                    prompt: prompt.into(),
                    max_tokens: params.max_tokens,
                    temperature: params.temperature,
                    stop: params.stop.clone(),
                },
            )
            .map_err(|e| match e {
                ProviderError::ContextOverflow { limit, .. } => ProviderError::ContextOverflow {
                    tokens: prompt.split_whitespace().count(),
                    limit,
                },
                other => other,
            })?;
        wire::parse::<wire::CompleteResponse>(Tool::Complete, &body).map(|r| r.text)
    }
}
