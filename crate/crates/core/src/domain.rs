//! Shared value types and the vector/interval arithmetic every stage builds on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance applied whenever a similarity is compared against a
/// threshold, so that threshold decisions do not flip across platforms.
pub const SIMILARITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector cannot be compared by cosine similarity")]
    ZeroVector,
    #[error("empty input")]
    EmptyInput,
    #[error("embedding must have at least one component")]
    EmptyEmbedding,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("invalid region: begin {begin} > end {end}")]
    InvalidRegion { begin: usize, end: usize },
    #[error("invalid time range: start {start_s} > end {end_s}")]
    InvalidTimeRange { start_s: f64, end_s: f64 },
    #[error("invalid video metadata: {0}")]
    InvalidVideo(String),
}

/// Basic properties of a source video, the only video-level facts shown to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoMeta {
    pub video_id: String,
    pub duration_s: f64,
    pub fps_native: f64,
    pub width: u32,
    pub height: u32,
}

impl VideoMeta {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(DomainError::InvalidVideo(format!(
                "duration_s must be > 0, got {}",
                self.duration_s
            )));
        }
        if !(self.fps_native.is_finite() && self.fps_native > 0.0) {
            return Err(DomainError::InvalidVideo(format!(
                "fps_native must be > 0, got {}",
                self.fps_native
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(DomainError::InvalidVideo(format!(
                "resolution must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// One sampled frame. `source` is a path or manifest key for the frame image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRef {
    pub index: usize,
    pub timestamp_s: f64,
    pub source: String,
    /// Precomputed image embedding; when present no image-embedding provider is consulted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

impl FrameRef {
    pub fn new(index: usize, timestamp_s: f64, source: impl Into<String>) -> Self {
        Self {
            index,
            timestamp_s,
            source: source.into(),
            embedding: None,
        }
    }
}

/// A closed interval `[begin, end]` of sampled-frame indices.
///
/// Seconds are always derived from the frame list that produced the indices
/// and are never stored on the region itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventRegion {
    pub begin: usize,
    pub end: usize,
}

impl EventRegion {
    pub fn new(begin: usize, end: usize) -> Result<Self, DomainError> {
        if begin > end {
            return Err(DomainError::InvalidRegion { begin, end });
        }
        Ok(Self { begin, end })
    }

    pub fn point(index: usize) -> Self {
        Self {
            begin: index,
            end: index,
        }
    }

    /// `end - begin`, i.e. the number of frame steps spanned.
    pub fn span(&self) -> usize {
        self.end - self.begin
    }

    pub fn len(&self) -> usize {
        self.span() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, other: &EventRegion) -> bool {
        self.begin <= other.begin && other.end <= self.end
    }

    pub fn contains_index(&self, index: usize) -> bool {
        self.begin <= index && index <= self.end
    }

    /// Whether the region lies inside a sequence of `frame_count` frames.
    pub fn fits(&self, frame_count: usize) -> bool {
        self.begin <= self.end && self.end < frame_count
    }
}

/// A fixed-length embedding stored with 32-bit components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVec(Vec<f32>);

impl EmbeddingVec {
    pub fn new(values: Vec<f32>) -> Result<Self, DomainError> {
        if values.is_empty() {
            return Err(DomainError::EmptyEmbedding);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(DomainError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn dot(&self, other: &EmbeddingVec) -> Result<f64, DomainError> {
        check_dims(self, other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum())
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVec {
    type Error = DomainError;

    fn try_from(values: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVec> for Vec<f32> {
    fn from(v: EmbeddingVec) -> Self {
        v.0
    }
}

/// A span of seconds, used for annotations and metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start_s: f64,
    pub end_s: f64,
}

impl TimeRange {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self, DomainError> {
        if !(start_s.is_finite() && end_s.is_finite()) || start_s > end_s {
            return Err(DomainError::InvalidTimeRange { start_s, end_s });
        }
        Ok(Self { start_s, end_s })
    }

    pub fn length(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            start_s: self.start_s + offset,
            end_s: self.end_s + offset,
        }
    }
}

fn check_dims(a: &EmbeddingVec, b: &EmbeddingVec) -> Result<(), DomainError> {
    if a.dim() != b.dim() {
        return Err(DomainError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// Cosine of the angle between two embeddings.
///
/// A zero vector is reported as [`DomainError::ZeroVector`] rather than
/// scored, since it usually means the encoder produced nothing useful.
pub fn cosine_similarity(a: &EmbeddingVec, b: &EmbeddingVec) -> Result<f64, DomainError> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(DomainError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Component-wise arithmetic mean, accumulated in f64.
pub fn mean_embedding<'a, I>(vectors: I) -> Result<EmbeddingVec, DomainError>
where
    I: IntoIterator<Item = &'a EmbeddingVec>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(DomainError::EmptyInput)?;
    let mut sum: Vec<f64> = first.values().iter().map(|&v| f64::from(v)).collect();
    let mut count = 1usize;
    for v in iter {
        check_dims(first, v)?;
        for (acc, &x) in sum.iter_mut().zip(v.values()) {
            *acc += f64::from(x);
        }
        count += 1;
    }
    let n = count as f64;
    EmbeddingVec::new(sum.into_iter().map(|s| (s / n) as f32).collect())
}

/// Temporal intersection over union.
pub fn tiou(p: &TimeRange, q: &TimeRange) -> f64 {
    let union = p.end_s.max(q.end_s) - p.start_s.min(q.start_s);
    if union <= 0.0 {
        // Both ranges are the same instant.
        return if p == q { 1.0 } else { 0.0 };
    }
    let inter = (p.end_s.min(q.end_s) - p.start_s.max(q.start_s)).max(0.0);
    (inter / union).clamp(0.0, 1.0)
}

/// `similarity >= threshold`, with [`SIMILARITY_TOLERANCE`] slack.
pub fn meets_threshold(similarity: f64, threshold: f64) -> bool {
    similarity >= threshold - SIMILARITY_TOLERANCE
}
