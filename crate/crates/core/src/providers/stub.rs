//! Deterministic in-process stand-ins for every provider.
//!
//! Stubs are pure functions of `(request, seed)`. They come in three families:
//! constants (`fixed`, `hash`, `echo`), table-driven (`lookup`, `scripted`)
//! loaded from a fixture file, and `blocks`, which maps each frame to one of
//! `k` mutually orthogonal unit vectors according to fixed block boundaries.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Captioner, CompletionParams, ImageEmbedder, LanguageModel, OieExtractor, ProviderError, SceneGraphGenerator,
    SceneTriple, TextEmbedder, Tool,
};
use crate::domain::{EmbeddingVec, FrameRef};

pub const DEFAULT_DIM: usize = 8;
pub const DEFAULT_MAX_PROMPT_TOKENS: usize = 1024;

/// Full stub description, usually loaded from a JSON fixture file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StubSpec {
    pub seed: u64,
    pub image: ImageStub,
    pub text: TextStub,
    pub caption: CaptionStub,
    pub scene_graph: SceneGraphStub,
    pub oie: OieStub,
    pub llm: LlmStub,
}

impl StubSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageStub {
    Fixed {
        vector: Vec<f32>,
    },
    Hash {
        dim: usize,
    },
    /// `starts` holds the first frame index of each block, beginning with 0.
    Blocks {
        starts: Vec<usize>,
        #[serde(default)]
        dim: Option<usize>,
    },
    Lookup {
        #[serde(default)]
        by_source: BTreeMap<String, Vec<f32>>,
        #[serde(default, deserialize_with = "index_keys")]
        by_index: BTreeMap<usize, Vec<f32>>,
        #[serde(default)]
        default: Option<Vec<f32>>,
    },
}

/// JSON object keys are strings, and internally tagged enums do not coerce them
/// back to integers on their own.
fn index_keys<'de, D, V>(d: D) -> Result<BTreeMap<usize, V>, D::Error>
where
    D: serde::Deserializer<'de>,
    V: Deserialize<'de>,
{
    BTreeMap::<String, V>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| {
            k.parse()
                .map(|i| (i, v))
                .map_err(|_| serde::de::Error::custom(format!("frame index key {k:?} is not a number")))
        })
        .collect()
}

impl Default for ImageStub {
    fn default() -> Self {
        ImageStub::Hash { dim: DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TextStub {
    Fixed {
        vector: Vec<f32>,
    },
    Hash {
        dim: usize,
    },
    Lookup {
        table: BTreeMap<String, Vec<f32>>,
        #[serde(default)]
        default: Option<Vec<f32>>,
        /// Hash unknown texts into this many dimensions instead of failing.
        #[serde(default)]
        hash_fallback_dim: Option<usize>,
    },
}

impl Default for TextStub {
    fn default() -> Self {
        TextStub::Hash { dim: DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CaptionStub {
    Fixed {
        #[serde(default = "default_caption")]
        text: String,
    },
    Scripted {
        #[serde(default)]
        by_source: BTreeMap<String, String>,
        #[serde(default, deserialize_with = "index_keys")]
        by_index: BTreeMap<usize, String>,
        #[serde(default)]
        default: Option<String>,
    },
}

fn default_caption() -> String {
    "a frame".into()
}

impl Default for CaptionStub {
    fn default() -> Self {
        CaptionStub::Fixed {
            text: default_caption(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneGraphStub {
    Fixed {
        #[serde(default)]
        triples: Vec<SceneTriple>,
    },
    Scripted {
        #[serde(default)]
        by_source: BTreeMap<String, Vec<SceneTriple>>,
        #[serde(default, deserialize_with = "index_keys")]
        by_index: BTreeMap<usize, Vec<SceneTriple>>,
        #[serde(default)]
        default: Vec<SceneTriple>,
    },
}

impl Default for SceneGraphStub {
    fn default() -> Self {
        SceneGraphStub::Fixed { triples: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OieFallback {
    #[default]
    Echo,
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OieStub {
    /// One tuple per sentence: first word, middle words, last word.
    #[default]
    Echo,
    Scripted {
        table: BTreeMap<String, Vec<Vec<String>>>,
        #[serde(default)]
        fallback: OieFallback,
    },
}

/// A reply chosen when the prompt contains every listed substring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmRule {
    pub contains: Vec<String>,
    #[serde(default)]
    pub excludes: Vec<String>,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmStub {
    Fixed {
        text: String,
        #[serde(default = "default_max_tokens")]
        max_prompt_tokens: usize,
    },
    /// Replies by exact prompt hash first, then the first matching rule, then `default`.
    Scripted {
        #[serde(default)]
        by_hash: BTreeMap<String, String>,
        #[serde(default)]
        rules: Vec<LlmRule>,
        #[serde(default)]
        default: Option<String>,
        #[serde(default = "default_max_tokens")]
        max_prompt_tokens: usize,
    },
}

fn default_max_tokens() -> usize {
    DEFAULT_MAX_PROMPT_TOKENS
}

impl Default for LlmStub {
    fn default() -> Self {
        LlmStub::Fixed {
            text: "an event in the video".into(),
            max_prompt_tokens: DEFAULT_MAX_PROMPT_TOKENS,
        }
    }
}

/// Hex SHA-256 of a prompt, the key used by `by_hash` tables.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Deterministic pseudo-embedding of `text` in `[-1, 1]^dim`.
pub fn hash_vector(seed: u64, text: &str, dim: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(dim);
    let mut counter = 0u32;
    while out.len() < dim {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(counter.to_le_bytes());
        h.update(text.as_bytes());
        for chunk in h.finalize().chunks_exact(4) {
            if out.len() == dim {
                break;
            }
            let x = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            out.push((f64::from(x) / f64::from(u32::MAX) * 2.0 - 1.0) as f32);
        }
        counter += 1;
    }
    // the all-zero vector is astronomically unlikely but would be unusable
    if out.iter().all(|&v| v == 0.0) {
        out[0] = 1.0;
    }
    out
}

fn unit(dim: usize, axis: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

fn embedding(tool: Tool, values: Vec<f32>) -> Result<EmbeddingVec, ProviderError> {
    EmbeddingVec::new(values).map_err(|e| ProviderError::bad(tool, e.to_string()))
}

#[derive(Debug)]
struct ImageStubImpl {
    spec: ImageStub,
    seed: u64,
}

impl ImageEmbedder for ImageStubImpl {
    fn model_id(&self) -> &str {
        "stub-image"
    }

    fn embed_image(&self, frame: &FrameRef) -> Result<EmbeddingVec, ProviderError> {
        let tool = Tool::EmbedImage;
        let values = match &self.spec {
            ImageStub::Fixed { vector } => vector.clone(),
            ImageStub::Hash { dim } => hash_vector(self.seed, &frame.source, *dim),
            ImageStub::Blocks { starts, dim } => {
                let block = starts.iter().rposition(|&s| s <= frame.index).unwrap_or(0);
                unit(dim.unwrap_or(starts.len()), block)
            }
            ImageStub::Lookup {
                by_source,
                by_index,
                default,
            } => by_source
                .get(&frame.source)
                .or_else(|| by_index.get(&frame.index))
                .or(default.as_ref())
                .cloned()
                .ok_or_else(|| ProviderError::bad(tool, format!("no scripted embedding for frame {}", frame.index)))?,
        };
        embedding(tool, values)
    }

    fn dim(&self) -> Option<usize> {
        match &self.spec {
            ImageStub::Fixed { vector } => Some(vector.len()),
            ImageStub::Hash { dim } => Some(*dim),
            ImageStub::Blocks { starts, dim } => Some(dim.unwrap_or(starts.len())),
            ImageStub::Lookup { .. } => None,
        }
    }
}

#[derive(Debug)]
struct TextStubImpl {
    spec: TextStub,
    seed: u64,
}

impl TextEmbedder for TextStubImpl {
    fn model_id(&self) -> &str {
        "stub-text"
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVec, ProviderError> {
        let tool = Tool::EmbedText;
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let values = match &self.spec {
            TextStub::Fixed { vector } => vector.clone(),
            TextStub::Hash { dim } => hash_vector(self.seed, text, *dim),
            TextStub::Lookup {
                table,
                default,
                hash_fallback_dim,
            } => match (table.get(text), default, hash_fallback_dim) {
                (Some(v), _, _) => v.clone(),
                (None, Some(v), _) => v.clone(),
                (None, None, Some(dim)) => hash_vector(self.seed, text, *dim),
                (None, None, None) => {
                    return Err(ProviderError::bad(tool, format!("no scripted embedding for {text:?}")))
                }
            },
        };
        embedding(tool, values)
    }

    fn dim(&self) -> Option<usize> {
        match &self.spec {
            TextStub::Fixed { vector } => Some(vector.len()),
            TextStub::Hash { dim } => Some(*dim),
            TextStub::Lookup { .. } => None,
        }
    }
}

#[derive(Debug)]
struct CaptionStubImpl(CaptionStub);

impl Captioner for CaptionStubImpl {
    fn model_id(&self) -> &str {
        "stub-caption"
    }

    fn generate_caption(&self, frame: &FrameRef) -> Result<String, ProviderError> {
        match &self.0 {
            CaptionStub::Fixed { text } => Ok(text.clone()),
            CaptionStub::Scripted {
                by_source,
                by_index,
                default,
            } => by_source
                .get(&frame.source)
                .or_else(|| by_index.get(&frame.index))
                .or(default.as_ref())
                .cloned()
                .ok_or_else(|| {
                    ProviderError::bad(Tool::Caption, format!("no scripted caption for frame {}", frame.index))
                }),
        }
    }
}

#[derive(Debug)]
struct SceneGraphStubImpl(SceneGraphStub);

impl SceneGraphGenerator for SceneGraphStubImpl {
    fn model_id(&self) -> &str {
        "stub-scene-graph"
    }

    fn generate_scene_graph(&self, frame: &FrameRef) -> Result<Vec<SceneTriple>, ProviderError> {
        Ok(match &self.0 {
            SceneGraphStub::Fixed { triples } => triples.clone(),
            SceneGraphStub::Scripted {
                by_source,
                by_index,
                default,
            } => by_source
                .get(&frame.source)
                .or_else(|| by_index.get(&frame.index))
                .unwrap_or(default)
                .clone(),
        })
    }
}

/// Split a sentence into `(first word, middle words, last word)`.
pub fn echo_tuples(sentence: &str) -> Vec<Vec<String>> {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    match words.len() {
        0 | 1 => vec![],
        2 => vec![vec![words[0].into(), words[1].into()]],
        n => vec![vec![words[0].into(), words[1..n - 1].join(" "), words[n - 1].into()]],
    }
}

#[derive(Debug)]
struct OieStubImpl(OieStub);

impl OieExtractor for OieStubImpl {
    fn model_id(&self) -> &str {
        "stub-oie"
    }

    fn extract_oie(&self, sentence: &str) -> Result<Vec<Vec<String>>, ProviderError> {
        if sentence.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        Ok(match &self.0 {
            OieStub::Echo => echo_tuples(sentence),
            OieStub::Scripted { table, fallback } => match table.get(sentence.trim()) {
                Some(t) => t.clone(),
                None => match fallback {
                    OieFallback::Echo => echo_tuples(sentence),
                    OieFallback::None => vec![],
                },
            },
        })
    }
}

#[derive(Debug)]
struct LlmStubImpl(LlmStub);

impl LanguageModel for LlmStubImpl {
    fn model_id(&self) -> &str {
        "stub-llm"
    }

    fn complete(&self, prompt: &str, _params: &CompletionParams) -> Result<String, ProviderError> {
        if prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        let limit = match &self.0 {
            LlmStub::Fixed { max_prompt_tokens, .. } | LlmStub::Scripted { max_prompt_tokens, .. } => {
                *max_prompt_tokens
            }
        };
        let tokens = prompt.split_whitespace().count();
        if tokens > limit {
            return Err(ProviderError::ContextOverflow { tokens, limit });
        }
        match &self.0 {
            LlmStub::Fixed { text, .. } => Ok(text.clone()),
            LlmStub::Scripted {
                by_hash,
                rules,
                default,
                ..
            } => {
                if let Some(reply) = by_hash.get(&prompt_hash(prompt)) {
                    return Ok(reply.clone());
                }
                rules
                    .iter()
                    .find(|r| {
                        r.contains.iter().all(|s| prompt.contains(s.as_str()))
                            && !r.excludes.iter().any(|s| prompt.contains(s.as_str()))
                    })
                    .map(|r| r.reply.clone())
                    .or_else(|| default.clone())
                    .ok_or_else(|| ProviderError::bad(Tool::Complete, "no scripted reply for prompt"))
            }
        }
    }
}

/// One stub per tool, ready to be placed in a [`super::Toolkit`].
#[derive(Clone)]
pub struct StubSet {
    pub image: Arc<dyn ImageEmbedder>,
    pub text: Arc<dyn TextEmbedder>,
    pub caption: Arc<dyn Captioner>,
    pub scene_graph: Arc<dyn SceneGraphGenerator>,
    pub oie: Arc<dyn OieExtractor>,
    pub llm: Arc<dyn LanguageModel>,
}

impl StubSet {
    pub fn build(spec: &StubSpec) -> Result<Self, ProviderError> {
        if let ImageStub::Blocks { starts, dim } = &spec.image {
            if starts.first() != Some(&0) || starts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ProviderError::Config(
                    "blocks stub needs strictly increasing starts beginning at 0".into(),
                ));
            }
            if dim.is_some_and(|d| d < starts.len()) {
                return Err(ProviderError::Config("blocks stub dim smaller than block count".into()));
            }
        }
        Ok(Self {
            image: Arc::new(ImageStubImpl {
                spec: spec.image.clone(),
                seed: spec.seed,
            }),
            text: Arc::new(TextStubImpl {
                spec: spec.text.clone(),
                seed: spec.seed,
            }),
            caption: Arc::new(CaptionStubImpl(spec.caption.clone())),
            scene_graph: Arc::new(SceneGraphStubImpl(spec.scene_graph.clone())),
            oie: Arc::new(OieStubImpl(spec.oie.clone())),
            llm: Arc::new(LlmStubImpl(spec.llm.clone())),
        })
    }
}
