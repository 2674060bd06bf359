//! Frame manifests, uniform temporal sampling and keyframe selection.
//!
//! Frames are never decoded here. A manifest lists pre-extracted frame images
//! (or precomputed embeddings) produced by an ingestion step outside the engine.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EmbeddingVec, EventRegion, FrameRef, TimeRange, VideoMeta};

/// Default sampling rate in frames per second.
pub const DEFAULT_FPS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest not found: {0}")]
    NotFound(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("manifest validation failed: {0}")]
    Validation(String),
    #[error("sampling rate must be positive, got {0}")]
    InvalidFps(f64),
    #[error("keyframe count must be at least 2, got {0}")]
    InvalidKeyframeCount(usize),
    #[error("region [{begin}, {end}] does not fit in {frames} frames")]
    RegionOutOfRange { begin: usize, end: usize, frames: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPolicy {
    pub fps: f64,
    #[serde(default = "yes")]
    pub include_boundaries: bool,
}

fn yes() -> bool {
    true
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        Self {
            fps: DEFAULT_FPS,
            include_boundaries: true,
        }
    }
}

/// A video plus its uniformly sampled frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameManifest {
    pub video: VideoMeta,
    pub sampling_fps: f64,
    pub frames: Vec<FrameRef>,
}

impl FrameManifest {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let manifest: FrameManifest = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        self.video
            .validate()
            .map_err(|e| IngestError::Validation(e.to_string()))?;
        if !(self.sampling_fps.is_finite() && self.sampling_fps > 0.0) {
            return Err(IngestError::Validation(format!(
                "sampling_fps must be > 0, got {}",
                self.sampling_fps
            )));
        }
        if self.frames.is_empty() {
            return Err(IngestError::Validation("manifest has no frames".into()));
        }
        let duration = self.video.duration_s;
        let mut embedding_dim = None;
        for (pos, frame) in self.frames.iter().enumerate() {
            if frame.index != pos {
                return Err(IngestError::Validation(format!(
                    "frame at position {pos} has index {}",
                    frame.index
                )));
            }
            let t = frame.timestamp_s;
            if !t.is_finite() || t < 0.0 || t > duration {
                return Err(IngestError::Validation(format!(
                    "frame {pos} timestamp {t} outside [0, {duration}]"
                )));
            }
            if pos > 0 && t <= self.frames[pos - 1].timestamp_s {
                return Err(IngestError::Validation(format!(
                    "frame {pos} timestamp {t} is not after the previous frame"
                )));
            }
            if let Some(values) = &frame.embedding {
                let e = EmbeddingVec::new(values.clone())
                    .map_err(|e| IngestError::Validation(format!("frame {pos}: {e}")))?;
                match embedding_dim {
                    None => embedding_dim = Some(e.dim()),
                    Some(d) if d != e.dim() => {
                        return Err(IngestError::Validation(format!(
                            "frame {pos} embedding has dim {}, expected {d}",
                            e.dim()
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, index: usize) -> Option<&FrameRef> {
        self.frames.get(index)
    }

    /// The seconds spanned by a region, read off the frame timestamps.
    pub fn time_range(&self, region: &EventRegion) -> Result<TimeRange, IngestError> {
        self.check_region(region)?;
        Ok(TimeRange {
            start_s: self.frames[region.begin].timestamp_s,
            end_s: self.frames[region.end].timestamp_s,
        })
    }

    pub fn check_region(&self, region: &EventRegion) -> Result<(), IngestError> {
        if !region.fits(self.frame_count()) {
            return Err(IngestError::RegionOutOfRange {
                begin: region.begin,
                end: region.end,
                frames: self.frame_count(),
            });
        }
        Ok(())
    }

    /// Index of the sampled frame whose timestamp is closest to `t` (earliest on ties).
    pub fn nearest_index(&self, t: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for f in &self.frames {
            let d = (f.timestamp_s - t).abs();
            if d < best_dist {
                best = f.index;
                best_dist = d;
            }
        }
        best
    }

    /// Map a span of seconds onto the sampled frame grid.
    pub fn region_for(&self, range: &TimeRange) -> EventRegion {
        let begin = self.nearest_index(range.start_s);
        let end = self.nearest_index(range.end_s).max(begin);
        EventRegion { begin, end }
    }

    pub fn keyframes(&self, region: &EventRegion, count: usize) -> Result<(Vec<&FrameRef>, bool), IngestError> {
        self.check_region(region)?;
        let selection = select_keyframes(region, count)?;
        Ok((
            selection.indices.iter().map(|&i| &self.frames[i]).collect(),
            selection.degenerate,
        ))
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<FrameManifest, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            IngestError::NotFound(path.display().to_string())
        } else {
            IngestError::Io {
                path: path.display().to_string(),
                source: e,
            }
        }
    })?;
    FrameManifest::from_json(&text)
}

/// Uniformly sample `meta` at `fps`: `t_i = i / fps` for `i = 0..=floor(duration * fps)`.
///
/// Timestamps are frame starts. Sources are `"<video_id>#<index>"` keys.
pub fn sample_uniform(meta: &VideoMeta, fps: f64) -> Result<Vec<FrameRef>, IngestError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(IngestError::InvalidFps(fps));
    }
    // guard against products like 2.9999999999 that should floor to 3
    let last = (meta.duration_s * fps + 1e-9).floor().max(0.0) as usize;
    Ok((0..=last)
        .map(|i| {
            let t = (i as f64 / fps).min(meta.duration_s);
            FrameRef::new(i, t, format!("{}#{}", meta.video_id, i))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeSelection {
    pub indices: Vec<usize>,
    /// Fewer than the requested number of distinct frames were available.
    pub degenerate: bool,
}

/// Pick `count` frames spread evenly over `region`, both boundaries included.
///
/// Index `q` maps to `begin + round(q * (end - begin) / (count - 1))`, rounding
/// halves up; repeated indices in short regions are dropped.
pub fn select_keyframes(region: &EventRegion, count: usize) -> Result<KeyframeSelection, IngestError> {
    if count < 2 {
        return Err(IngestError::InvalidKeyframeCount(count));
    }
    let span = region.span();
    let denom = count - 1;
    let mut indices: Vec<usize> = Vec::with_capacity(count);
    for q in 0..count {
        let offset = (2 * q * span + denom) / (2 * denom);
        let idx = region.begin + offset;
        if indices.last() != Some(&idx) {
            indices.push(idx);
        }
    }
    Ok(KeyframeSelection {
        degenerate: indices.len() < count,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(duration: f64) -> VideoMeta {
        VideoMeta {
            video_id: "v".into(),
            duration_s: duration,
            fps_native: 30.0,
            width: 640,
            height: 480,
        }
    }

    fn manifest(n: usize) -> FrameManifest {
        FrameManifest {
            video: meta((n - 1) as f64),
            sampling_fps: 1.0,
            frames: sample_uniform(&meta((n - 1) as f64), 1.0).unwrap(),
        }
    }

    #[test]
    fn sample_uniform_examples() {
        let f = sample_uniform(&meta(10.0), 1.0).unwrap();
        assert_eq!(f.len(), 11);
        assert_eq!(f.last().unwrap().timestamp_s, 10.0);

        let f = sample_uniform(&meta(10.0), 2.0).unwrap();
        assert_eq!(f.len(), 21);
        let ts: Vec<f64> = f.iter().map(|f| f.timestamp_s).collect();
        let want: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        assert_eq!(ts, want);

        let f = sample_uniform(&meta(0.5), 1.0).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].timestamp_s, 0.0);

        assert!(matches!(
            sample_uniform(&meta(1.0), 0.0),
            Err(IngestError::InvalidFps(_))
        ));
    }

    #[test]
    fn sample_count_formula() {
        for (d, fps) in [(3.0, 10.0), (7.3, 3.0), (0.3, 10.0), (59.9, 1.0), (12.5, 0.5)] {
            let f = sample_uniform(&meta(d), fps).unwrap();
            assert_eq!(f.len(), (d * fps + 1e-9).floor() as usize + 1, "d={d} fps={fps}");
            assert!(f.iter().all(|f| f.timestamp_s <= d));
            assert!(f.iter().enumerate().all(|(i, f)| f.index == i));
        }
    }

    #[test]
    fn keyframe_examples() {
        let k = select_keyframes(&EventRegion::new(0, 10).unwrap(), 3).unwrap();
        assert_eq!(k.indices, vec![0, 5, 10]);
        assert!(!k.degenerate);
        let k = select_keyframes(&EventRegion::new(2, 10).unwrap(), 5).unwrap();
        assert_eq!(k.indices, vec![2, 4, 6, 8, 10]);
        let k = select_keyframes(&EventRegion::new(4, 4).unwrap(), 3).unwrap();
        assert_eq!(k.indices, vec![4]);
        assert!(k.degenerate);
        let k = select_keyframes(&EventRegion::new(0, 9).unwrap(), 4).unwrap();
        assert_eq!(k.indices, vec![0, 3, 6, 9]);
        assert!(select_keyframes(&EventRegion::point(0), 1).is_err());
    }

    #[test]
    fn keyframes_strictly_increasing_with_boundaries() {
        for b in 0..12 {
            for e in b..30 {
                for m in 2..8 {
                    let r = EventRegion::new(b, e).unwrap();
                    let k = select_keyframes(&r, m).unwrap();
                    assert!(k.indices.windows(2).all(|w| w[0] < w[1]));
                    assert_eq!(k.indices[0], b);
                    assert_eq!(*k.indices.last().unwrap(), e);
                    assert_eq!(k.degenerate, k.indices.len() < m);
                }
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = manifest(10);
        m.frames[3].embedding = Some(vec![1.0, 0.0]);
        let text = m.to_json();
        let back = FrameManifest::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.frame_count(), 10);
        assert_eq!(FrameManifest::from_json(&back.to_json()).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_unsorted_and_out_of_range() {
        let mut m = manifest(10);
        m.frames.swap(2, 3);
        m.frames[2].index = 2;
        m.frames[3].index = 3;
        assert!(matches!(
            FrameManifest::from_json(&m.to_json()),
            Err(IngestError::Validation(_))
        ));

        let mut m = manifest(10);
        m.frames[9].timestamp_s = 9.5;
        assert!(matches!(
            FrameManifest::from_json(&m.to_json()),
            Err(IngestError::Validation(_))
        ));

        let mut m = manifest(4);
        m.frames[0].embedding = Some(vec![1.0]);
        m.frames[1].embedding = Some(vec![1.0, 2.0]);
        assert!(matches!(
            FrameManifest::from_json(&m.to_json()),
            Err(IngestError::Validation(_))
        ));
    }

    #[test]
    fn load_missing_and_malformed() {
        assert!(matches!(
            load_manifest("/nonexistent/manifest.json"),
            Err(IngestError::NotFound(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, "{ not json").unwrap();
        assert!(matches!(load_manifest(&p), Err(IngestError::Parse(_))));
        std::fs::write(&p, manifest(10).to_json()).unwrap();
        assert_eq!(load_manifest(&p).unwrap().frame_count(), 10);
    }

    #[test]
    fn region_mapping() {
        let m = manifest(11);
        let r = EventRegion::new(2, 7).unwrap();
        let t = m.time_range(&r).unwrap();
        assert_eq!((t.start_s, t.end_s), (2.0, 7.0));
        assert_eq!(m.region_for(&t), r);
        assert_eq!(
            m.region_for(&TimeRange::new(2.4, 7.6).unwrap()),
            EventRegion::new(2, 8).unwrap()
        );
        assert!(m.time_range(&EventRegion::new(3, 11).unwrap()).is_err());
    }
}
