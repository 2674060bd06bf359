//! Request and response bodies of the provider HTTP protocol.
//!
//! One POST route per tool, JSON in both directions. Responses are parsed
//! strictly: unknown fields are rejected, except the optional `model_id` every
//! response may carry.

use serde::{Deserialize, Serialize};

use super::{ProviderError, SceneEntity, SceneTriple, Tool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRequest {
    pub image_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingResponse {
    pub embedding: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionResponse {
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireEntity {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireTriple {
    pub subject: WireEntity,
    pub predicate: String,
    pub object: WireEntity,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneGraphResponse {
    pub triples: Vec<WireTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OieResponse {
    pub tuples: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

impl From<WireEntity> for SceneEntity {
    fn from(e: WireEntity) -> Self {
        SceneEntity {
            label: e.label,
            bbox: e.bbox,
        }
    }
}

impl From<WireTriple> for SceneTriple {
    fn from(t: WireTriple) -> Self {
        SceneTriple {
            subject: t.subject.into(),
            predicate: t.predicate,
            object: t.object.into(),
            confidence: t.confidence,
        }
    }
}

/// Parse a response body for `tool`, mapping schema violations to `BadResponse`.
pub fn parse<T: for<'de> Deserialize<'de>>(tool: Tool, body: &[u8]) -> Result<T, ProviderError> {
    serde_json::from_slice(body).map_err(|e| ProviderError::bad(tool, format!("schema violation: {e}")))
}

/// Check that `body` is a well-formed response for `tool`.
pub fn validate_response(tool: Tool, body: &[u8]) -> Result<(), ProviderError> {
    match tool {
        Tool::EmbedImage | Tool::EmbedText => {
            let r: EmbeddingResponse = parse(tool, body)?;
            if r.embedding.is_empty() || r.embedding.iter().any(|v| !v.is_finite()) {
                return Err(ProviderError::bad(tool, "embedding empty or non-finite"));
            }
        }
        Tool::Caption => {
            parse::<CaptionResponse>(tool, body)?;
        }
        Tool::SceneGraph => {
            parse::<SceneGraphResponse>(tool, body)?;
        }
        Tool::Oie => {
            parse::<OieResponse>(tool, body)?;
        }
        Tool::Complete => {
            parse::<CompleteResponse>(tool, body)?;
        }
    }
    Ok(())
}
