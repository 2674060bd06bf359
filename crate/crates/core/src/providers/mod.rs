//! Client layer for the external model-backed tools.
//!
//! Every tool sits behind a small trait. Two families implement them: the
//! JSON-over-HTTP client in [`http`] and the deterministic in-process stubs in
//! [`stub`]. [`Toolkit`] bundles one implementation per tool and performs the
//! response validation that both families share; [`ToolSession`] is a
//! per-task view that memoizes embeddings and records every call.

pub mod cache;
pub mod http;
pub mod stub;
pub mod wire;

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{EmbeddingVec, FrameRef, VideoMeta};

pub use cache::{CacheKey, ResponseCache};
pub use http::HttpClient;
pub use stub::StubSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("{tool} provider unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable {
        tool: Tool,
        attempts: u32,
        last_error: String,
    },
    #[error("bad response from {tool} provider: {detail}")]
    BadResponse { tool: Tool, detail: String },
    #[error("text input must not be empty")]
    EmptyText,
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("prompt of {tokens} tokens exceeds the provider limit of {limit}")]
    ContextOverflow { tokens: usize, limit: usize },
    #[error("cannot read frame source {source_path}: {detail}")]
    SourceUnavailable { source_path: String, detail: String },
    #[error("cache i/o error: {0}")]
    Io(String),
    #[error("invalid provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn bad(tool: Tool, detail: impl Into<String>) -> Self {
        Self::BadResponse {
            tool,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    EmbedImage,
    EmbedText,
    Caption,
    SceneGraph,
    Oie,
    Complete,
}

impl Tool {
    pub const ALL: [Tool; 6] = [
        Tool::EmbedImage,
        Tool::EmbedText,
        Tool::Caption,
        Tool::SceneGraph,
        Tool::Oie,
        Tool::Complete,
    ];

    pub fn route(self) -> &'static str {
        match self {
            Tool::EmbedImage => "/v1/embed_image",
            Tool::EmbedText => "/v1/embed_text",
            Tool::Caption => "/v1/caption",
            Tool::SceneGraph => "/v1/scene_graph",
            Tool::Oie => "/v1/oie",
            Tool::Complete => "/v1/complete",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tool::EmbedImage => "embed_image",
            Tool::EmbedText => "embed_text",
            Tool::Caption => "caption",
            Tool::SceneGraph => "scene_graph",
            Tool::Oie => "oie",
            Tool::Complete => "complete",
        }
    }
}

impl std::fmt::Display for Tool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Labelled box in native frame pixels, `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntity {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTriple {
    pub subject: SceneEntity,
    pub predicate: String,
    pub object: SceneEntity,
    pub confidence: f64,
}

impl SceneTriple {
    fn check(&self, bounds: Option<(u32, u32)>) -> Result<(), String> {
        if !(self.confidence.is_finite() && (0.0..=1.0).contains(&self.confidence)) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        for entity in [&self.subject, &self.object] {
            let [x1, y1, x2, y2] = entity.bbox;
            if entity.bbox.iter().any(|v| !v.is_finite()) || x1 > x2 || y1 > y2 {
                return Err(format!("malformed box {:?} for {}", entity.bbox, entity.label));
            }
            if let Some((w, h)) = bounds {
                if x1 < 0.0 || y1 < 0.0 || x2 > f64::from(w) || y2 > f64::from(h) {
                    return Err(format!(
                        "box {:?} for {} outside {w}x{h} frame",
                        entity.bbox, entity.label
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Scene graph of one frame, triples ordered by confidence (desc) then subject label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub frame: FrameRef,
    pub triples: Vec<SceneTriple>,
}

impl SceneGraph {
    /// Validate raw triples against `video` bounds and sort them into rendering order.
    pub fn new(
        frame: FrameRef,
        mut triples: Vec<SceneTriple>,
        video: Option<&VideoMeta>,
    ) -> Result<Self, ProviderError> {
        let bounds = video.map(|v| (v.width, v.height));
        for t in &triples {
            t.check(bounds).map_err(|e| ProviderError::bad(Tool::SceneGraph, e))?;
        }
        triples.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| a.subject.label.cmp(&b.subject.label))
        });
        Ok(Self { frame, triples })
    }
}

/// Keep exactly the triples with `confidence >= tau`; order is preserved.
pub fn filter_triples(graph: &SceneGraph, tau: f64) -> SceneGraph {
    SceneGraph {
        frame: graph.frame.clone(),
        triples: graph.triples.iter().filter(|t| t.confidence >= tau).cloned().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCaption {
    pub frame: FrameRef,
    pub text: String,
}

impl FrameCaption {
    pub fn new(frame: FrameRef, text: &str) -> Result<Self, ProviderError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(ProviderError::bad(Tool::Caption, "empty caption"));
        }
        Ok(Self {
            frame,
            text: text.to_string(),
        })
    }
}

/// An open-IE extraction `(a1, p, a2, ...)` and its space-joined assertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OieTuple {
    pub parts: Vec<String>,
    pub assertion: String,
}

impl OieTuple {
    pub fn new<S: AsRef<str>>(parts: &[S]) -> Result<Self, ProviderError> {
        let parts: Vec<String> = parts
            .iter()
            .map(|p| p.as_ref().trim().to_string())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() < 2 {
            return Err(ProviderError::bad(
                Tool::Oie,
                format!("tuple needs at least 2 parts, got {parts:?}"),
            ));
        }
        let assertion = parts.join(" ");
        Ok(Self { parts, assertion })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            max_tokens: 256,
            temperature: 0.0,
            stop: Vec::new(),
        }
    }
}

/// Where one tool is served from. `endpoint` is a base URL or `stub:<name>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model_id: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: "stub:default".into(),
            model_id: "stub".into(),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_base_ms: 200,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout_ms == 0 {
            return Err(ProviderError::Config("timeout_ms must be > 0".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(ProviderError::Config("endpoint must not be empty".into()));
        }
        Ok(())
    }

    pub fn stub_name(&self) -> Option<&str> {
        self.endpoint.strip_prefix("stub:")
    }
}

pub trait ImageEmbedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed_image(&self, frame: &FrameRef) -> Result<EmbeddingVec, ProviderError>;
    /// Output dimension, when known without a call.
    fn dim(&self) -> Option<usize> {
        None
    }
}

pub trait TextEmbedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVec, ProviderError>;
    fn dim(&self) -> Option<usize> {
        None
    }
}

pub trait Captioner: Send + Sync {
    fn model_id(&self) -> &str;
    fn generate_caption(&self, frame: &FrameRef) -> Result<String, ProviderError>;
}

pub trait SceneGraphGenerator: Send + Sync {
    fn model_id(&self) -> &str;
    fn generate_scene_graph(&self, frame: &FrameRef) -> Result<Vec<SceneTriple>, ProviderError>;
}

pub trait OieExtractor: Send + Sync {
    fn model_id(&self) -> &str;
    fn extract_oie(&self, sentence: &str) -> Result<Vec<Vec<String>>, ProviderError>;
}

pub trait LanguageModel: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, ProviderError>;
}

/// Counting semaphore bounding concurrent LLM requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(limit: usize) -> Self {
        Self {
            free: Mutex::new(limit.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().unwrap();
            while *free == 0 {
                free = self.cv.wait(free).unwrap();
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
        out
    }
}

/// One implementation per tool plus shared validation.
#[derive(Clone)]
pub struct Toolkit {
    pub image: Arc<dyn ImageEmbedder>,
    pub text: Arc<dyn TextEmbedder>,
    pub caption: Arc<dyn Captioner>,
    pub scene_graph: Arc<dyn SceneGraphGenerator>,
    pub oie: Arc<dyn OieExtractor>,
    pub llm: Arc<dyn LanguageModel>,
    llm_gate: Arc<Gate>,
}

impl std::fmt::Debug for Toolkit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Toolkit")
            .field("image", &self.image.model_id())
            .field("text", &self.text.model_id())
            .field("caption", &self.caption.model_id())
            .field("scene_graph", &self.scene_graph.model_id())
            .field("oie", &self.oie.model_id())
            .field("llm", &self.llm.model_id())
            .finish()
    }
}

impl Toolkit {
    pub fn new(
        image: Arc<dyn ImageEmbedder>,
        text: Arc<dyn TextEmbedder>,
        caption: Arc<dyn Captioner>,
        scene_graph: Arc<dyn SceneGraphGenerator>,
        oie: Arc<dyn OieExtractor>,
        llm: Arc<dyn LanguageModel>,
    ) -> Result<Self, ProviderError> {
        if let (Some(a), Some(b)) = (image.dim(), text.dim()) {
            if a != b {
                return Err(ProviderError::Config(format!(
                    "image embedding dim {a} differs from text embedding dim {b}"
                )));
            }
        }
        Ok(Self {
            image,
            text,
            caption,
            scene_graph,
            oie,
            llm,
            llm_gate: Arc::new(Gate::new(usize::MAX)),
        })
    }

    /// Every tool backed by the stubs described in `spec`.
    pub fn from_stubs(spec: &StubSpec) -> Result<Self, ProviderError> {
        let s = stub::StubSet::build(spec)?;
        Self::new(s.image, s.text, s.caption, s.scene_graph, s.oie, s.llm)
    }

    pub fn with_llm_limit(mut self, limit: usize) -> Self {
        self.llm_gate = Arc::new(Gate::new(limit));
        self
    }

    pub fn session(&self) -> ToolSession<'_> {
        ToolSession {
            kit: self,
            video: None,
            image_memo: HashMap::new(),
            text_memo: HashMap::new(),
            calls: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOrigin {
    Provider,
    Memo,
    Manifest,
}

/// Provenance of one tool invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub tool: Tool,
    pub request: String,
    pub origin: CallOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn short_digest(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// A per-task handle: memoizes embeddings by request and logs every call.
///
/// Sessions are not shared between tasks, so traces never depend on how
/// concurrent tasks happened to interleave.
pub struct ToolSession<'a> {
    kit: &'a Toolkit,
    video: Option<VideoMeta>,
    image_memo: HashMap<(usize, String), EmbeddingVec>,
    text_memo: HashMap<String, EmbeddingVec>,
    calls: Vec<CallRecord>,
}

impl<'a> ToolSession<'a> {
    pub fn for_video(mut self, video: &VideoMeta) -> Self {
        self.video = Some(video.clone());
        self
    }

    pub fn toolkit(&self) -> &'a Toolkit {
        self.kit
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    /// Drain the call log, keeping memoized embeddings.
    pub fn take_calls(&mut self) -> Vec<CallRecord> {
        std::mem::take(&mut self.calls)
    }

    fn record<T>(&mut self, tool: Tool, request: String, origin: CallOrigin, result: &Result<T, ProviderError>) {
        self.calls.push(CallRecord {
            tool,
            request,
            origin,
            error: result.as_ref().err().map(ToString::to_string),
        });
    }

    pub fn embed_image(&mut self, frame: &FrameRef) -> Result<EmbeddingVec, ProviderError> {
        let request = format!("frame#{}", frame.index);
        if let Some(values) = &frame.embedding {
            let out =
                EmbeddingVec::new(values.clone()).map_err(|e| ProviderError::bad(Tool::EmbedImage, e.to_string()));
            self.record(Tool::EmbedImage, request, CallOrigin::Manifest, &out);
            return out;
        }
        let key = (frame.index, frame.source.clone());
        if let Some(hit) = self.image_memo.get(&key) {
            let out = Ok(hit.clone());
            self.record(Tool::EmbedImage, request, CallOrigin::Memo, &out);
            return out;
        }
        let out = self.kit.image.embed_image(frame);
        self.record(Tool::EmbedImage, request, CallOrigin::Provider, &out);
        let v = out?;
        self.image_memo.insert(key, v.clone());
        Ok(v)
    }

    pub fn embed_text(&mut self, text: &str) -> Result<EmbeddingVec, ProviderError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(ProviderError::EmptyText);
        }
        if let Some(hit) = self.text_memo.get(text) {
            let out = Ok(hit.clone());
            self.record(Tool::EmbedText, text.to_string(), CallOrigin::Memo, &out);
            return out;
        }
        let out = self.kit.text.embed_text(text);
        self.record(Tool::EmbedText, text.to_string(), CallOrigin::Provider, &out);
        let v = out?;
        self.text_memo.insert(text.to_string(), v.clone());
        Ok(v)
    }

    pub fn generate_caption(&mut self, frame: &FrameRef) -> Result<FrameCaption, ProviderError> {
        let out = self
            .kit
            .caption
            .generate_caption(frame)
            .and_then(|text| FrameCaption::new(frame.clone(), &text));
        self.record(
            Tool::Caption,
            format!("frame#{}", frame.index),
            CallOrigin::Provider,
            &out,
        );
        out
    }

    pub fn generate_scene_graph(&mut self, frame: &FrameRef) -> Result<SceneGraph, ProviderError> {
        let video = self.video.clone();
        let out = self
            .kit
            .scene_graph
            .generate_scene_graph(frame)
            .and_then(|triples| SceneGraph::new(frame.clone(), triples, video.as_ref()));
        self.record(
            Tool::SceneGraph,
            format!("frame#{}", frame.index),
            CallOrigin::Provider,
            &out,
        );
        out
    }

    pub fn extract_oie(&mut self, sentence: &str) -> Result<Vec<OieTuple>, ProviderError> {
        let sentence = sentence.trim();
        if sentence.is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let out = self.kit.oie.extract_oie(sentence).and_then(|tuples| {
            tuples
                .iter()
                .map(|parts| OieTuple::new(parts))
                .collect::<Result<Vec<_>, _>>()
        });
        self.record(Tool::Oie, sentence.to_string(), CallOrigin::Provider, &out);
        out
    }

    pub fn complete_llm(&mut self, prompt: &str, params: &CompletionParams) -> Result<String, ProviderError> {
        if prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        let llm = &self.kit.llm;
        let out = self.kit.llm_gate.run(|| llm.complete(prompt, params));
        self.record(
            Tool::Complete,
            format!("sha256:{}", short_digest(prompt.as_bytes())),
            CallOrigin::Provider,
            &out,
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entity(label: &str, bbox: [f64; 4]) -> SceneEntity {
        SceneEntity {
            label: label.into(),
            bbox,
        }
    }

    fn triple(subject: &str, confidence: f64) -> SceneTriple {
        SceneTriple {
            subject: entity(subject, [0.0, 0.0, 10.0, 10.0]),
            predicate: "on".into(),
            object: entity("table", [5.0, 5.0, 20.0, 20.0]),
            confidence,
        }
    }

    fn frame() -> FrameRef {
        FrameRef::new(0, 0.0, "f0")
    }

    fn meta() -> VideoMeta {
        VideoMeta {
            video_id: "v".into(),
            duration_s: 10.0,
            fps_native: 30.0,
            width: 100,
            height: 100,
        }
    }

    fn confidences(g: &SceneGraph) -> Vec<f64> {
        g.triples.iter().map(|t| t.confidence).collect()
    }

    #[test]
    fn scene_graph_sorted_and_validated() {
        let g = SceneGraph::new(frame(), vec![triple("cup", 0.3), triple("man", 0.9)], Some(&meta())).unwrap();
        assert_eq!(confidences(&g), vec![0.9, 0.3]);

        let g = SceneGraph::new(frame(), vec![triple("z", 0.5), triple("a", 0.5)], None).unwrap();
        assert_eq!(g.triples[0].subject.label, "a");

        assert!(SceneGraph::new(frame(), vec![], None).unwrap().triples.is_empty());

        let mut bad = triple("cup", 0.5);
        bad.subject.bbox = [10.0, 0.0, 5.0, 5.0];
        assert!(matches!(
            SceneGraph::new(frame(), vec![bad], None),
            Err(ProviderError::BadResponse { .. })
        ));
        let mut outside = triple("cup", 0.5);
        outside.object.bbox = [0.0, 0.0, 150.0, 50.0];
        assert!(SceneGraph::new(frame(), vec![outside.clone()], Some(&meta())).is_err());
        assert!(SceneGraph::new(frame(), vec![outside], None).is_ok());
        assert!(SceneGraph::new(frame(), vec![triple("cup", 1.5)], None).is_err());
    }

    #[test]
    fn filter_examples() {
        let g = SceneGraph::new(
            frame(),
            vec![triple("a", 0.9), triple("b", 0.4), triple("c", 0.39)],
            None,
        )
        .unwrap();
        assert_eq!(confidences(&filter_triples(&g, 0.4)), vec![0.9, 0.4]);
        assert_eq!(filter_triples(&g, 0.0), g);
        let empty = SceneGraph::new(frame(), vec![], None).unwrap();
        assert!(filter_triples(&empty, 0.4).triples.is_empty());
    }

    #[test]
    fn caption_and_oie_validation() {
        assert!(FrameCaption::new(frame(), "  \n ").is_err());
        assert_eq!(FrameCaption::new(frame(), " a man ").unwrap().text, "a man");
        let t = OieTuple::new(&["A", "participating", "B"]).unwrap();
        assert_eq!(t.assertion, "A participating B");
        assert!(OieTuple::new(&["only"]).is_err());
    }

    proptest! {
        #[test]
        fn filter_keeps_exactly_confident_triples(
            confs in proptest::collection::vec(0.0f64..=1.0, 0..20),
            tau in 0.0f64..=1.0,
        ) {
            let triples: Vec<SceneTriple> = confs
                .iter()
                .enumerate()
                .map(|(i, &c)| triple(&format!("s{i}"), c))
                .collect();
            let g = SceneGraph::new(frame(), triples, None).unwrap();
            let f = filter_triples(&g, tau);
            prop_assert!(f.triples.iter().all(|t| t.confidence >= tau));
            prop_assert_eq!(f.triples.len(), confs.iter().filter(|&&c| c >= tau).count());
            // order preserved: the survivors appear in the same relative order
            let kept: Vec<&SceneTriple> = g.triples.iter().filter(|t| t.confidence >= tau).collect();
            prop_assert_eq!(f.triples.iter().collect::<Vec<_>>(), kept);
        }
    }
}
