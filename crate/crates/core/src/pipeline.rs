//! One video end to end: initial events, reasoning, and the task response.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    answer_question, gather_event_info, produce_dvc_response, run_reasoning, AgentConfig, AgentError, Demonstration,
    EventOutcome, QaAnswer, Question, Task,
};
use crate::domain::EventRegion;
use crate::eval::{DvcRecord, QaItem, QaPrediction};
use crate::media::FrameManifest;
use crate::providers::{CallRecord, ProviderError, Toolkit};
use crate::refine::{RefineError, S2Config};
use crate::segment::{segment_manifest, RegionState, S1Config, SegmentError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub task: Task,
    pub s1: S1Config,
    pub s2: S2Config,
    pub agent: AgentConfig,
}

impl PipelineConfig {
    pub fn for_task(task: Task) -> Self {
        Self {
            task,
            s1: S1Config {
                n_events: match task {
                    Task::Qa => 1,
                    Task::Dvc => 3,
                },
                ..Default::default()
            },
            s2: S2Config::default(),
            agent: AgentConfig::for_task(task),
        }
    }
}

/// Broad failure classes, mirrored by the CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Config,
    Provider,
    Data,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    pub fn class(&self) -> FailureClass {
        match self {
            PipelineError::Segment(SegmentError::Provider(_))
            | PipelineError::Agent(AgentError::Provider(_))
            | PipelineError::Agent(AgentError::Refine(RefineError::Provider(_))) => FailureClass::Provider,
            PipelineError::Segment(SegmentError::Config(_))
            | PipelineError::Agent(AgentError::Config(_))
            | PipelineError::Agent(AgentError::Demo(_))
            | PipelineError::Agent(AgentError::Refine(RefineError::Config(_))) => FailureClass::Config,
            _ => FailureClass::Data,
        }
    }
}

impl From<ProviderError> for PipelineError {
    fn from(e: ProviderError) -> Self {
        PipelineError::Agent(AgentError::Provider(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSource {
    Segmentation,
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaTrace {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<QaAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub calls: Vec<CallRecord>,
}

impl QaTrace {
    pub fn prediction(&self, video_id: &str) -> QaPrediction {
        QaPrediction {
            id: self.id.clone(),
            video_id: video_id.to_string(),
            answer_index: self.answer.as_ref().and_then(|a| a.answer_index),
            raw_text: self.answer.as_ref().map(|a| a.raw_text.clone()).unwrap_or_default(),
            ambiguous: self.answer.as_ref().is_none_or(|a| a.ambiguous),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRun {
    pub video_id: String,
    pub proposal_source: ProposalSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s1: Vec<RegionState>,
    pub events: Vec<EventOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qa: Vec<QaTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dvc: Vec<DvcRecord>,
}

impl VideoRun {
    pub fn regions(&self) -> Vec<EventRegion> {
        self.events.iter().map(|e| e.region).collect()
    }
}

/// Run the pipeline on one video.
///
/// `proposals` replaces segmentation when given. `demos` are already selected
/// for `cfg.task`; for DVC they prefix the instruction prompt, for QA the
/// answer prompt.
pub fn run_video(
    toolkit: &Toolkit,
    manifest: &FrameManifest,
    proposals: Option<&[EventRegion]>,
    questions: &[(String, QaItem)],
    cfg: &PipelineConfig,
    demos: &[Demonstration],
) -> Result<VideoRun, PipelineError> {
    manifest.validate().map_err(|e| PipelineError::Data(e.to_string()))?;
    let (source, s1, initial) = match proposals {
        Some(p) => {
            for r in p {
                manifest
                    .check_region(r)
                    .map_err(|e| PipelineError::Data(e.to_string()))?;
            }
            (ProposalSource::Given, Vec::new(), p.to_vec())
        }
        None => {
            let states = segment_manifest(manifest, toolkit, &cfg.s1)?;
            let regions = states.iter().map(|s| s.region).collect();
            (ProposalSource::Segmentation, states, regions)
        }
    };
    let proposal_demos: &[Demonstration] = if cfg.task == Task::Dvc { demos } else { &[] };
    let events = run_reasoning(toolkit, manifest, &initial, &cfg.agent, &cfg.s2, proposal_demos)?;

    let mut qa = Vec::new();
    let mut dvc = Vec::new();
    match cfg.task {
        Task::Dvc => dvc = produce_dvc_response(&events),
        Task::Qa => {
            let mut session = toolkit.session().for_video(&manifest.video);
            let mut bundles = Vec::with_capacity(events.len());
            let mut summaries = Vec::with_capacity(events.len());
            let mut gather_error = None;
            for e in &events {
                match gather_event_info(&mut session, manifest, e.region, &cfg.agent) {
                    Ok(b) => {
                        bundles.push(b);
                        summaries.push(e.instruction.clone().unwrap_or_default());
                    }
                    Err(err) => gather_error = Some(err.to_string()),
                }
            }
            let shared_calls = session.take_calls();
            for (n, (id, item)) in questions.iter().enumerate() {
                let question = Question {
                    text: item.question.clone(),
                    options: item.options.clone(),
                };
                let (answer, error) = match &gather_error {
                    Some(e) => (None, Some(format!("event information unavailable: {e}"))),
                    None => match answer_question(&mut session, &bundles, &summaries, &question, demos, &cfg.agent) {
                        Ok(a) => (Some(a), None),
                        Err(AgentError::InvalidOptions(k)) => {
                            return Err(PipelineError::Data(format!("{id}: {k} options")));
                        }
                        Err(e) => (None, Some(e.to_string())),
                    },
                };
                let mut calls = if n == 0 { shared_calls.clone() } else { Vec::new() };
                calls.extend(session.take_calls());
                qa.push(QaTrace {
                    id: id.clone(),
                    answer,
                    error,
                    calls,
                });
            }
        }
    }
    Ok(VideoRun {
        video_id: manifest.video.video_id.clone(),
        proposal_source: source,
        s1,
        events,
        qa,
        dvc,
    })
}
