//! Initial event proposal by moving-average region growing.
//!
//! `n` centers are spread evenly over the interior frames. Each epoch computes
//! the mean embedding of a region once, then grows the region to the left and
//! then to the right for as long as the next frame's cosine similarity to that
//! mean stays at or above `delta1`. Epochs repeat until the region stops
//! changing or `max_epochs` is reached.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{self, DomainError, EmbeddingVec, EventRegion};
use crate::media::FrameManifest;
use crate::providers::{ProviderError, Toolkit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("need at least 3 frames and 1 <= n <= frames - 2 (got n = {n}, frames = {frames})")]
    TooFewFrames { n: usize, frames: usize },
    #[error("invalid segmentation config: {0}")]
    Config(String),
    #[error("frame {index}: {source}")]
    Embedding {
        index: usize,
        #[source]
        source: DomainError,
    },
    #[error("expected {expected} frame embeddings, got {got}")]
    EmbeddingCount { expected: usize, got: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct S1Config {
    pub n_events: usize,
    pub delta1: f64,
    pub fps: f64,
    pub max_epochs: usize,
}

impl Default for S1Config {
    fn default() -> Self {
        Self {
            n_events: 1,
            delta1: 0.95,
            fps: 1.0,
            max_epochs: 10,
        }
    }
}

impl S1Config {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.n_events == 0 {
            return Err(SegmentError::Config("n_events must be >= 1".into()));
        }
        if !(self.delta1 > 0.0 && self.delta1 <= 1.0) {
            return Err(SegmentError::Config(format!(
                "delta1 must be in (0, 1], got {}",
                self.delta1
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SegmentError::Config(format!("fps must be > 0, got {}", self.fps)));
        }
        if self.max_epochs == 0 {
            return Err(SegmentError::Config("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionState {
    pub region: EventRegion,
    /// The last epoch left the region unchanged.
    pub stable: bool,
    pub epochs_run: usize,
}

/// Embeddings of every sampled frame, checked once so that growth never fails.
#[derive(Debug, Clone)]
pub struct FrameEmbeddings {
    vectors: Vec<EmbeddingVec>,
}

impl FrameEmbeddings {
    pub fn new(vectors: Vec<EmbeddingVec>) -> Result<Self, SegmentError> {
        let dim = vectors.first().map(EmbeddingVec::dim);
        for (index, v) in vectors.iter().enumerate() {
            if Some(v.dim()) != dim {
                return Err(SegmentError::Embedding {
                    index,
                    source: DomainError::DimensionMismatch {
                        left: dim.unwrap_or(0),
                        right: v.dim(),
                    },
                });
            }
            if v.is_zero() {
                return Err(SegmentError::Embedding {
                    index,
                    source: DomainError::ZeroVector,
                });
            }
        }
        Ok(Self { vectors })
    }

    /// Embed every manifest frame, using precomputed vectors where present.
    pub fn from_manifest(manifest: &FrameManifest, tools: &Toolkit) -> Result<Self, SegmentError> {
        let mut session = tools.session().for_video(&manifest.video);
        let vectors = manifest
            .frames
            .iter()
            .map(|f| session.embed_image(f))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(vectors)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, index: usize) -> &EmbeddingVec {
        &self.vectors[index]
    }

    fn similarity(&self, index: usize, mean: &EmbeddingVec) -> f64 {
        // dims were checked on construction and a mean of nonzero vectors
        // only vanishes when they cancel exactly; treat that as dissimilar
        domain::cosine_similarity(&self.vectors[index], mean).unwrap_or(-1.0)
    }
}

/// `n` evenly spaced interior centers: `round(k * (N - 1) / (n + 1))` for `k = 1..=n`.
pub fn init_centers(n: usize, frame_count: usize) -> Result<Vec<usize>, SegmentError> {
    if frame_count < 3 || n == 0 || n > frame_count - 2 {
        return Err(SegmentError::TooFewFrames { n, frames: frame_count });
    }
    let last = frame_count - 1;
    let denom = n + 1;
    let mut centers: Vec<usize> = Vec::with_capacity(n);
    for k in 1..=n {
        // round half up in integers
        let c = ((2 * k * last + denom) / (2 * denom)).clamp(1, frame_count - 2);
        let c = match centers.last() {
            Some(&prev) if c <= prev && prev < frame_count - 2 => prev + 1,
            _ => c,
        };
        centers.push(c);
    }
    Ok(centers)
}

/// One growth epoch. The returned region always contains `region`.
pub fn expand_epoch(region: EventRegion, embeddings: &FrameEmbeddings, delta1: f64) -> EventRegion {
    let members = (region.begin..=region.end).map(|i| embeddings.get(i));
    let Ok(mean) = domain::mean_embedding(members) else {
        return region;
    };
    let mut begin = region.begin;
    while begin > 0 && domain::meets_threshold(embeddings.similarity(begin - 1, &mean), delta1) {
        begin -= 1;
    }
    let last = embeddings.len() - 1;
    let mut end = region.end;
    while end < last && domain::meets_threshold(embeddings.similarity(end + 1, &mean), delta1) {
        end += 1;
    }
    EventRegion { begin, end }
}

/// Grow one center until the region is unchanged for a full epoch.
pub fn grow_region(center: usize, embeddings: &FrameEmbeddings, cfg: &S1Config) -> RegionState {
    let mut region = EventRegion::point(center);
    let mut epochs_run = 0;
    let mut stable = false;
    while epochs_run < cfg.max_epochs {
        let next = expand_epoch(region, embeddings, cfg.delta1);
        epochs_run += 1;
        if next == region {
            stable = true;
            break;
        }
        region = next;
    }
    RegionState {
        region,
        stable,
        epochs_run,
    }
}

/// Propose `cfg.n_events` regions, sorted by `(begin, end)`.
///
/// Regions grown from different centers may overlap or coincide.
pub fn run_s1(embeddings: &FrameEmbeddings, cfg: &S1Config) -> Result<Vec<RegionState>, SegmentError> {
    cfg.validate()?;
    let centers = init_centers(cfg.n_events, embeddings.len())?;
    let mut states: Vec<RegionState> = centers.par_iter().map(|&c| grow_region(c, embeddings, cfg)).collect();
    states.sort_by_key(|s| (s.region.begin, s.region.end));
    Ok(states)
}

/// [`run_s1`] over a manifest, embedding its frames through `tools`.
pub fn segment_manifest(
    manifest: &FrameManifest,
    tools: &Toolkit,
    cfg: &S1Config,
) -> Result<Vec<RegionState>, SegmentError> {
    cfg.validate()?;
    let embeddings = FrameEmbeddings::from_manifest(manifest, tools)?;
    run_s1(&embeddings, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(dim: usize, axis: usize) -> EmbeddingVec {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        EmbeddingVec::new(v).unwrap()
    }

    /// `blocks[i]` consecutive frames share the unit vector of axis `i`.
    fn blocks(lengths: &[usize]) -> FrameEmbeddings {
        let dim = lengths.len();
        FrameEmbeddings::new(
            lengths
                .iter()
                .enumerate()
                .flat_map(|(axis, &len)| std::iter::repeat_n(unit(dim, axis), len))
                .collect(),
        )
        .unwrap()
    }

    fn angle(theta: f64) -> EmbeddingVec {
        EmbeddingVec::new(vec![theta.cos() as f32, theta.sin() as f32]).unwrap()
    }

    fn region(b: usize, e: usize) -> EventRegion {
        EventRegion::new(b, e).unwrap()
    }

    #[test]
    fn center_examples() {
        assert_eq!(init_centers(2, 11).unwrap(), vec![3, 7]);
        assert_eq!(init_centers(1, 3).unwrap(), vec![1]);
        assert_eq!(init_centers(3, 5).unwrap(), vec![1, 2, 3]);
        assert!(init_centers(1, 2).is_err());
        assert!(init_centers(4, 5).is_err());
        assert!(init_centers(0, 5).is_err());
    }

    #[test]
    fn centers_interior_and_increasing() {
        for frames in 3..60 {
            for n in 1..=frames - 2 {
                let c = init_centers(n, frames).unwrap();
                assert_eq!(c.len(), n);
                assert!(c.windows(2).all(|w| w[0] < w[1]), "n={n} frames={frames}");
                assert!(c.iter().all(|&i| i >= 1 && i <= frames - 2));
            }
        }
    }

    #[test]
    fn expand_examples() {
        let e = blocks(&[5, 5]);
        assert_eq!(expand_epoch(region(2, 2), &e, 0.95), region(0, 4));
        assert_eq!(expand_epoch(region(0, 4), &e, 0.95), region(0, 4));

        let same = FrameEmbeddings::new(vec![unit(3, 0); 9]).unwrap();
        assert_eq!(expand_epoch(region(3, 3), &same, 0.95), region(0, 8));
    }

    #[test]
    fn mean_fixed_within_epoch() {
        // frames drift by 10 degrees each; cos(10deg) = 0.985 and cos(20deg) = 0.940
        let e = FrameEmbeddings::new((0..10).map(|i| angle(f64::from(i) * 10f64.to_radians())).collect()).unwrap();
        // against the mean of frame 5 alone only the direct neighbours qualify
        assert_eq!(expand_epoch(region(5, 5), &e, 0.95), region(4, 6));
    }

    #[test]
    fn run_s1_recovers_blocks() {
        let e = blocks(&[5, 5, 5]);
        let cfg = S1Config {
            n_events: 3,
            ..Default::default()
        };
        let regions: Vec<EventRegion> = run_s1(&e, &cfg).unwrap().iter().map(|s| s.region).collect();
        assert_eq!(regions, vec![region(0, 4), region(5, 9), region(10, 14)]);
    }

    #[test]
    fn single_event_on_uniform_video() {
        let e = FrameEmbeddings::new(vec![unit(2, 1); 12]).unwrap();
        let s = run_s1(&e, &S1Config::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].region, region(0, 11));
        assert!(s[0].stable);
    }

    #[test]
    fn epoch_cap_leaves_drifting_regions_unstable() {
        let e = FrameEmbeddings::new((0..30).map(|i| angle(f64::from(i) * 4f64.to_radians())).collect()).unwrap();
        let cfg = S1Config {
            max_epochs: 1,
            ..Default::default()
        };
        let s = run_s1(&e, &cfg).unwrap();
        assert_eq!(s[0].epochs_run, 1);
        assert!(!s[0].stable);

        let full = run_s1(&e, &S1Config::default()).unwrap();
        assert!(full[0].region.contains(&s[0].region));
    }

    #[test]
    fn rejects_bad_embeddings() {
        let zero = EmbeddingVec::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            FrameEmbeddings::new(vec![unit(2, 0), zero]),
            Err(SegmentError::Embedding { index: 1, .. })
        ));
        assert!(FrameEmbeddings::new(vec![unit(2, 0), unit(3, 0)]).is_err());
        let e = blocks(&[1, 1]);
        assert!(matches!(
            run_s1(&e, &S1Config::default()),
            Err(SegmentError::TooFewFrames { .. })
        ));
    }

    fn generic_embeddings() -> impl Strategy<Value = Vec<Vec<f32>>> {
        (3usize..30).prop_flat_map(|n| {
            proptest::collection::vec(
                proptest::collection::vec(-1.0f32..1.0, 4).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 0.05)),
                n,
            )
        })
    }

    proptest! {
        #[test]
        fn growth_is_monotone_and_idempotent(
            raw in generic_embeddings(),
            delta in 0.3f64..1.0,
            n in 1usize..4,
        ) {
            let e = FrameEmbeddings::new(raw.into_iter().map(|v| EmbeddingVec::new(v).unwrap()).collect()).unwrap();
            let frames = e.len();
            prop_assume!(n <= frames - 2);
            let cfg = S1Config { n_events: n, delta1: delta, max_epochs: 50, ..Default::default() };
            for c in init_centers(n, frames).unwrap() {
                let mut r = EventRegion::point(c);
                for _ in 0..5 {
                    let next = expand_epoch(r, &e, delta);
                    prop_assert!(next.contains(&r));
                    r = next;
                }
            }
            let out = run_s1(&e, &cfg).unwrap();
            prop_assert_eq!(out.len(), n);
            for s in &out {
                prop_assert!(s.region.fits(frames));
                prop_assert!(s.epochs_run <= cfg.max_epochs);
                if s.stable {
                    prop_assert_eq!(expand_epoch(s.region, &e, delta), s.region);
                }
            }
        }

        #[test]
        fn strict_threshold_keeps_single_frames(
            raw in generic_embeddings(),
        ) {
            // no two random frames are parallel, so nothing clears delta1 = 1
            let e = FrameEmbeddings::new(raw.into_iter().map(|v| EmbeddingVec::new(v).unwrap()).collect()).unwrap();
            let cfg = S1Config { n_events: 1, delta1: 1.0, ..Default::default() };
            let mut distinct = true;
            for i in 0..e.len() {
                for j in i + 1..e.len() {
                    if domain::cosine_similarity(e.get(i), e.get(j)).unwrap() >= 1.0 - 1e-5 {
                        distinct = false;
                    }
                }
            }
            prop_assume!(distinct);
            let out = run_s1(&e, &cfg).unwrap();
            prop_assert_eq!(out[0].region.span(), 0);
        }

        #[test]
        fn parallel_matches_sequential(raw in generic_embeddings(), delta in 0.5f64..1.0) {
            let e = FrameEmbeddings::new(raw.into_iter().map(|v| EmbeddingVec::new(v).unwrap()).collect()).unwrap();
            let n = (e.len() - 2).min(5);
            let cfg = S1Config { n_events: n, delta1: delta, ..Default::default() };
            let mut sequential: Vec<RegionState> = init_centers(n, e.len())
                .unwrap()
                .into_iter()
                .map(|c| grow_region(c, &e, &cfg))
                .collect();
            sequential.sort_by_key(|s| (s.region.begin, s.region.end));
            prop_assert_eq!(run_s1(&e, &cfg).unwrap(), sequential);
        }
    }
}
