//! Instruction-guided boundary refinement.
//!
//! An instruction is split into assertions by open IE. A region is scored by
//! the best one-to-one matching between assertion embeddings and `m_v`
//! keyframe embeddings (the raw sum of matched cosines, `xi`). Boundaries are
//! then hill-climbed in steps of `stride` frames while `xi` strictly improves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_max_assignment, Assignment, ScoreMatrix};
use crate::domain::{self, DomainError, EmbeddingVec, EventRegion, SIMILARITY_TOLERANCE};
use crate::media::{select_keyframes, FrameManifest, IngestError};
use crate::providers::{ProviderError, ToolSession};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("instruction must not be empty")]
    EmptyText,
    #[error("open IE produced no assertions")]
    NoAssertions,
    #[error("invalid refinement config: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Ingest(#[from] IngestErrorText),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// [`IngestError`] flattened to text so that [`RefineError`] stays `Clone`.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct IngestErrorText(pub String);

impl From<IngestError> for RefineError {
    fn from(e: IngestError) -> Self {
        RefineError::Ingest(IngestErrorText(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum S2Mode {
    /// Four sequential one-boundary searches: begin left, begin right, end left, end right.
    #[default]
    Trajectories,
    /// Both boundaries move together; each step takes the best of expand, shift and contract.
    Symmetric,
}

impl std::str::FromStr for S2Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trajectories" => Ok(S2Mode::Trajectories),
            "symmetric" => Ok(S2Mode::Symmetric),
            other => Err(format!(
                "unknown s2 mode {other:?} (expected trajectories or symmetric)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct S2Config {
    pub m_v: usize,
    pub stride: usize,
    pub max_moves: usize,
    /// Minimum `end - begin`; `None` means `m_v - 1`.
    pub min_len: Option<usize>,
    pub mode: S2Mode,
}

impl Default for S2Config {
    fn default() -> Self {
        Self {
            m_v: 5,
            stride: 5,
            max_moves: 20,
            min_len: None,
            mode: S2Mode::Trajectories,
        }
    }
}

impl S2Config {
    pub fn validate(&self) -> Result<(), RefineError> {
        if self.m_v < 2 {
            return Err(RefineError::Config(format!("m_v must be >= 2, got {}", self.m_v)));
        }
        if self.stride == 0 {
            return Err(RefineError::Config("stride must be >= 1".into()));
        }
        if self.min_len == Some(0) {
            return Err(RefineError::Config("min_len must be >= 1".into()));
        }
        Ok(())
    }

    pub fn min_len(&self) -> usize {
        self.min_len.unwrap_or(self.m_v - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Begin,
    End,
    Both,
}

/// One tentative move and whether it was kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub boundary: Boundary,
    pub delta_begin: i64,
    pub delta_end: i64,
    pub region: EventRegion,
    pub xi_before: f64,
    pub xi_after: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub mode: S2Mode,
    pub assertions: Vec<String>,
    pub initial: EventRegion,
    pub moves: Vec<MoveRecord>,
    #[serde(rename = "final")]
    pub final_region: EventRegion,
    pub xi_initial: f64,
    pub xi_final: f64,
    /// Number of alignment scorings, the initial region included.
    pub scorings: usize,
    /// Some region had fewer distinct frames than `m_v`.
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RefinementTrace {
    fn unchanged(region: EventRegion, mode: S2Mode, note: String) -> Self {
        Self {
            mode,
            assertions: Vec::new(),
            initial: region,
            moves: Vec::new(),
            final_region: region,
            xi_initial: 0.0,
            xi_final: 0.0,
            scorings: 0,
            degenerate: false,
            note: Some(note),
        }
    }

    pub fn accepted_moves(&self) -> impl Iterator<Item = &MoveRecord> {
        self.moves.iter().filter(|m| m.accepted)
    }
}

/// Score of one region as seen by the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionScore {
    pub xi: f64,
    pub degenerate: bool,
}

/// Split `instruction` into open-IE assertions, in extraction order.
pub fn decompose_instruction(session: &mut ToolSession<'_>, instruction: &str) -> Result<Vec<String>, RefineError> {
    if instruction.trim().is_empty() {
        return Err(RefineError::EmptyText);
    }
    let tuples = session.extract_oie(instruction)?;
    if tuples.is_empty() {
        return Err(RefineError::NoAssertions);
    }
    Ok(tuples.into_iter().map(|t| t.assertion).collect())
}

/// Hungarian-optimal sum of cosines between assertions (rows) and keyframes (columns).
pub fn score_alignment(
    assertions: &[EmbeddingVec],
    keyframes: &[EmbeddingVec],
) -> Result<(f64, Assignment), RefineError> {
    if assertions.is_empty() || keyframes.is_empty() {
        return Err(DomainError::EmptyInput.into());
    }
    let rows = assertions
        .iter()
        .map(|a| {
            keyframes
                .iter()
                .map(|k| domain::cosine_similarity(a, k))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let matrix = ScoreMatrix::new(rows).map_err(|e| RefineError::Config(e.to_string()))?;
    let assignment = solve_max_assignment(&matrix);
    Ok((assignment.total, assignment))
}

/// Score `region` of `manifest` against already embedded assertions.
pub fn score_region(
    session: &mut ToolSession<'_>,
    manifest: &FrameManifest,
    assertions: &[EmbeddingVec],
    region: EventRegion,
    m_v: usize,
) -> Result<RegionScore, RefineError> {
    manifest.check_region(&region)?;
    let selection = select_keyframes(&region, m_v)?;
    let keyframes = selection
        .indices
        .iter()
        .map(|&i| session.embed_image(&manifest.frames[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let (xi, _) = score_alignment(assertions, &keyframes)?;
    Ok(RegionScore {
        xi,
        degenerate: selection.degenerate,
    })
}

struct Search<'f, E> {
    cfg: &'f S2Config,
    frame_count: usize,
    region: EventRegion,
    xi: f64,
    moves: Vec<MoveRecord>,
    scorings: usize,
    degenerate: bool,
    score: &'f mut dyn FnMut(EventRegion) -> Result<RegionScore, E>,
}

impl<E> Search<'_, E> {
    fn eval(&mut self, region: EventRegion) -> Result<f64, E> {
        let s = (self.score)(region)?;
        self.scorings += 1;
        self.degenerate |= s.degenerate;
        Ok(s.xi)
    }

    /// Shortest length a candidate may have: `min_len`, or the current length
    /// when the search started below it.
    fn floor_len(&self) -> usize {
        self.cfg.min_len().min(self.region.span())
    }

    /// Apply signed offsets, clamping to the video and the minimum length.
    fn candidate(&self, db: i64, de: i64) -> Option<EventRegion> {
        let last = self.frame_count as i64 - 1;
        let floor = self.floor_len() as i64;
        let (b, e) = (self.region.begin as i64, self.region.end as i64);
        let mut nb = (b + db).clamp(0, last);
        let mut ne = (e + de).clamp(0, last);
        if db > 0 {
            nb = nb.min(ne - floor);
        }
        if de < 0 {
            ne = ne.max(nb + floor);
        }
        if nb < 0 || ne > last || ne - nb < floor || (nb, ne) == (b, e) {
            return None;
        }
        Some(EventRegion {
            begin: nb as usize,
            end: ne as usize,
        })
    }

    fn try_move(&mut self, boundary: Boundary, next: EventRegion) -> Result<bool, E> {
        let xi_after = self.eval(next)?;
        let accepted = xi_after > self.xi + SIMILARITY_TOLERANCE;
        self.moves.push(MoveRecord {
            boundary,
            delta_begin: next.begin as i64 - self.region.begin as i64,
            delta_end: next.end as i64 - self.region.end as i64,
            region: next,
            xi_before: self.xi,
            xi_after,
            accepted,
        });
        if accepted {
            self.region = next;
            self.xi = xi_after;
        }
        Ok(accepted)
    }

    fn trajectory(&mut self, boundary: Boundary, sign: i64) -> Result<(), E> {
        let step = sign * self.cfg.stride as i64;
        for _ in 0..self.cfg.max_moves {
            let (db, de) = match boundary {
                Boundary::Begin => (step, 0),
                _ => (0, step),
            };
            let Some(next) = self.candidate(db, de) else {
                break;
            };
            if !self.try_move(boundary, next)? {
                break;
            }
        }
        Ok(())
    }

    fn symmetric(&mut self) -> Result<(), E> {
        let s = self.cfg.stride as i64;
        for _ in 0..self.cfg.max_moves {
            let mut best: Option<(EventRegion, f64)> = None;
            let mut tried: Vec<EventRegion> = Vec::with_capacity(4);
            for (db, de) in [(-s, s), (-s, -s), (s, s), (s, -s)] {
                let Some(next) = self.candidate(db, de) else {
                    continue;
                };
                if tried.contains(&next) {
                    continue;
                }
                tried.push(next);
                let xi = self.eval(next)?;
                let improves = xi > self.xi + SIMILARITY_TOLERANCE;
                self.moves.push(MoveRecord {
                    boundary: Boundary::Both,
                    delta_begin: next.begin as i64 - self.region.begin as i64,
                    delta_end: next.end as i64 - self.region.end as i64,
                    region: next,
                    xi_before: self.xi,
                    xi_after: xi,
                    accepted: false,
                });
                if improves && best.is_none_or(|(_, b)| xi > b) {
                    best = Some((next, xi));
                }
            }
            let Some((next, xi)) = best else {
                break;
            };
            if let Some(m) = self.moves.iter_mut().rev().find(|m| m.region == next) {
                m.accepted = true;
            }
            self.region = next;
            self.xi = xi;
        }
        Ok(())
    }
}

/// Hill-climb `region` under an arbitrary scoring function.
///
/// `score` is called once for the initial region and once per tentative
/// move. In trajectory mode each of the four searches makes at most
/// `max_moves` tentative moves; in symmetric mode each of at most `max_moves`
/// steps scores up to four candidates.
pub fn search<E>(
    region: EventRegion,
    frame_count: usize,
    cfg: &S2Config,
    mut score: impl FnMut(EventRegion) -> Result<RegionScore, E>,
) -> Result<RefinementTrace, E> {
    let mut s = Search {
        cfg,
        frame_count,
        region,
        xi: 0.0,
        moves: Vec::new(),
        scorings: 0,
        degenerate: false,
        score: &mut score,
    };
    s.xi = s.eval(region)?;
    let xi_initial = s.xi;
    match cfg.mode {
        S2Mode::Trajectories => {
            s.trajectory(Boundary::Begin, -1)?;
            s.trajectory(Boundary::Begin, 1)?;
            s.trajectory(Boundary::End, -1)?;
            s.trajectory(Boundary::End, 1)?;
        }
        S2Mode::Symmetric => s.symmetric()?,
    }
    Ok(RefinementTrace {
        mode: cfg.mode,
        assertions: Vec::new(),
        initial: region,
        final_region: s.region,
        xi_initial,
        xi_final: s.xi,
        scorings: s.scorings,
        degenerate: s.degenerate,
        moves: s.moves,
        note: None,
    })
}

/// Refine one event region against an instruction.
///
/// When open IE yields nothing the whole instruction is used as the single
/// assertion; when that cannot be embedded either, the region is returned
/// unchanged with a note in the trace.
pub fn refine_event(
    session: &mut ToolSession<'_>,
    manifest: &FrameManifest,
    region: EventRegion,
    instruction: &str,
    cfg: &S2Config,
) -> Result<(EventRegion, RefinementTrace), RefineError> {
    cfg.validate()?;
    manifest.check_region(&region)?;
    let (assertions, mut note) = match decompose_instruction(session, instruction) {
        Ok(a) => (a, None),
        Err(RefineError::NoAssertions) => (
            vec![instruction.trim().to_string()],
            Some("no open-IE tuples; scored the whole instruction".to_string()),
        ),
        Err(e) => return Err(e),
    };
    let embedded: Result<Vec<EmbeddingVec>, ProviderError> = assertions.iter().map(|a| session.embed_text(a)).collect();
    let embedded = match embedded {
        Ok(v) => v,
        Err(e) if note.is_some() => {
            let note = format!("refinement skipped: {e}");
            return Ok((region, RefinementTrace::unchanged(region, cfg.mode, note)));
        }
        Err(e) => return Err(e.into()),
    };
    let mut trace = search(region, manifest.frame_count(), cfg, |r| {
        score_region(session, manifest, &embedded, r, cfg.m_v)
    })?;
    trace.assertions = assertions;
    trace.note = note.take();
    Ok((trace.final_region, trace))
}
