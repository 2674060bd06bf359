//! The reasoning loop: gather event information through the tools, ask the
//! LLM for an instruction describing the event, refine the event boundaries
//! against that instruction, and repeat until the boundaries settle.

pub mod prompt;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EventRegion, TimeRange, VideoMeta};
use crate::eval::{match_answer, DvcRecord};
use crate::media::{select_keyframes, FrameManifest, IngestError};
use crate::providers::{
    filter_triples, short_digest, CallRecord, CompletionParams, ProviderError, SceneTriple, ToolSession, Toolkit,
};
use crate::refine::{refine_event, RefineError, RefinementTrace, S2Config};

pub use prompt::{build_prompt, option_letter, Demonstration, Question};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Qa,
    Dvc,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qa" => Ok(Task::Qa),
            "dvc" => Ok(Task::Dvc),
            other => Err(format!("unknown task {other:?} (expected qa or dvc)")),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Qa => "qa",
            Task::Dvc => "dvc",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("a QA prompt needs a question and options")]
    MissingQuestion,
    #[error("the LLM returned no usable text")]
    EmptyCompletion,
    #[error("need 2 to 26 options, got {0}")]
    InvalidOptions(usize),
    #[error("demonstrations: {0}")]
    Demo(String),
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("{0}")]
    Ingest(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Refine(#[from] RefineError),
}

impl From<IngestError> for AgentError {
    fn from(e: IngestError) -> Self {
        AgentError::Ingest(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    /// Maximum reasoning steps per event.
    #[serde(rename = "T")]
    pub t_max: usize,
    /// Convergence threshold on `|d begin| + |d end|`, in seconds.
    pub delta_conv: f64,
    pub n_frames: usize,
    pub n_shots: usize,
    pub tau: f64,
    pub max_tokens: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            t_max: 1,
            delta_conv: 1.0,
            n_frames: 4,
            n_shots: 6,
            tau: 0.4,
            max_tokens: 256,
        }
    }
}

impl AgentConfig {
    pub fn for_task(task: Task) -> Self {
        Self {
            n_shots: match task {
                Task::Qa => 6,
                Task::Dvc => 4,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.delta_conv.is_finite() && self.delta_conv >= 0.0) {
            return Err(AgentError::Config(format!(
                "delta_conv must be >= 0, got {}",
                self.delta_conv
            )));
        }
        if self.n_frames == 0 {
            return Err(AgentError::Config("n_frames must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(AgentError::Config(format!("tau must be in [0, 1], got {}", self.tau)));
        }
        if self.max_tokens == 0 {
            return Err(AgentError::Config("max_tokens must be >= 1".into()));
        }
        Ok(())
    }

    fn completion(&self) -> CompletionParams {
        CompletionParams {
            max_tokens: self.max_tokens,
            temperature: 0.0,
            stop: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameInfo {
    pub index: usize,
    pub timestamp_s: f64,
    pub caption: String,
    /// Scene-graph triples at or above the confidence threshold.
    pub triples: Vec<SceneTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventInfoBundle {
    pub event: EventRegion,
    pub time: TimeRange,
    pub video: VideoMeta,
    pub frames: Vec<FrameInfo>,
    /// Fewer distinct frames than requested were available.
    #[serde(default)]
    pub degenerate: bool,
}

/// Frames sampled for information gathering. A single frame is the center one.
pub fn info_frames(event: &EventRegion, n_frames: usize) -> Result<(Vec<usize>, bool), IngestError> {
    if n_frames == 1 {
        return Ok((vec![event.begin + event.span() / 2], false));
    }
    let sel = select_keyframes(event, n_frames)?;
    Ok((sel.indices, sel.degenerate))
}

pub fn gather_event_info(
    session: &mut ToolSession<'_>,
    manifest: &FrameManifest,
    event: EventRegion,
    cfg: &AgentConfig,
) -> Result<EventInfoBundle, AgentError> {
    let time = manifest.time_range(&event)?;
    let (indices, degenerate) = info_frames(&event, cfg.n_frames)?;
    let mut frames = Vec::with_capacity(indices.len());
    for i in indices {
        let frame = &manifest.frames[i];
        let caption = session.generate_caption(frame)?;
        let graph = filter_triples(&session.generate_scene_graph(frame)?, cfg.tau);
        frames.push(FrameInfo {
            index: i,
            timestamp_s: frame.timestamp_s,
            caption: caption.text,
            triples: graph.triples,
        });
    }
    Ok(EventInfoBundle {
        event,
        time,
        video: manifest.video.clone(),
        frames,
        degenerate,
    })
}

/// First nonempty line of a completion with markup and a leading label removed.
pub fn clean_completion(text: &str) -> Option<String> {
    text.lines()
        .map(|line| {
            let mut l = line.trim().trim_matches(|c: char| matches!(c, '*' | '_' | '`' | '"'));
            l = l.trim_start_matches(['#', '>', '-', '*', ' ']);
            if l.to_ascii_lowercase().starts_with("instruction:") {
                l = &l["instruction:".len()..];
            }
            l.trim()
                .trim_matches(|c: char| matches!(c, '*' | '_' | '`' | '"'))
                .trim()
                .to_string()
        })
        .find(|l| !l.is_empty())
}

/// Ask the LLM for an instruction describing `bundle`. Returns it with the prompt digest.
pub fn propose_instruction(
    session: &mut ToolSession<'_>,
    bundle: &EventInfoBundle,
    demos: &[Demonstration],
    cfg: &AgentConfig,
) -> Result<(String, String), AgentError> {
    let prompt = build_prompt(Task::Dvc, std::slice::from_ref(bundle), &[], demos, None)?;
    let digest = short_digest(prompt.as_bytes());
    let reply = session.complete_llm(&prompt, &cfg.completion())?;
    let instruction = clean_completion(&reply).ok_or(AgentError::EmptyCompletion)?;
    Ok((instruction, digest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    /// 0 for the single pass made when `T = 0`.
    pub step: usize,
    pub region_before: EventRegion,
    pub region_after: EventRegion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<EventInfoBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementTrace>,
    pub boundary_change_s: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub calls: Vec<CallRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub initial: EventRegion,
    pub region: EventRegion,
    pub time: TimeRange,
    /// The last instruction proposed, if any step got that far.
    pub instruction: Option<String>,
    pub converged: bool,
    pub steps: Vec<StepTrace>,
}

#[derive(Default)]
struct StepResult {
    info: Option<EventInfoBundle>,
    digest: Option<String>,
    instruction: Option<String>,
    refinement: Option<(EventRegion, RefinementTrace)>,
    error: Option<AgentError>,
}

fn step_inner(
    session: &mut ToolSession<'_>,
    manifest: &FrameManifest,
    region: EventRegion,
    refine: Option<&S2Config>,
    demos: &[Demonstration],
    cfg: &AgentConfig,
    out: &mut StepResult,
) -> Result<(), AgentError> {
    let info = out.info.insert(gather_event_info(session, manifest, region, cfg)?);
    let (instruction, digest) = propose_instruction(session, info, demos, cfg)?;
    out.digest = Some(digest);
    let instruction = out.instruction.insert(instruction);
    if let Some(s2) = refine {
        out.refinement = Some(refine_event(session, manifest, region, instruction, s2)?);
    }
    Ok(())
}

fn run_step(
    session: &mut ToolSession<'_>,
    manifest: &FrameManifest,
    region: EventRegion,
    refine: Option<&S2Config>,
    demos: &[Demonstration],
    cfg: &AgentConfig,
) -> StepResult {
    let mut out = StepResult::default();
    if let Err(e) = step_inner(session, manifest, region, refine, demos, cfg, &mut out) {
        out.error = Some(e);
    }
    out
}

/// Run the reasoning loop for one event.
///
/// With `T = 0` a single information and proposal pass produces the
/// instruction and the region passes through unchanged. A failed step keeps
/// the last good region and the loop moves on to the next step.
pub fn reason_event(
    toolkit: &Toolkit,
    manifest: &FrameManifest,
    initial: EventRegion,
    cfg: &AgentConfig,
    s2: &S2Config,
    demos: &[Demonstration],
) -> Result<EventOutcome, AgentError> {
    cfg.validate()?;
    s2.validate()?;
    manifest.check_region(&initial)?;
    let mut session = toolkit.session().for_video(&manifest.video);
    let mut region = initial;
    let mut instruction = None;
    let mut converged = false;
    let mut steps = Vec::new();

    let passes: Vec<(usize, Option<&S2Config>)> = if cfg.t_max == 0 {
        vec![(0, None)]
    } else {
        (1..=cfg.t_max).map(|t| (t, Some(s2))).collect()
    };
    for (step, refine) in passes {
        let r = run_step(&mut session, manifest, region, refine, demos, cfg);
        let before = region;
        let mut change = 0.0;
        if let (None, Some((after, _))) = (&r.error, &r.refinement) {
            let old = manifest.time_range(&before)?;
            let new = manifest.time_range(after)?;
            change = (new.start_s - old.start_s).abs() + (new.end_s - old.end_s).abs();
            region = *after;
        }
        if r.instruction.is_some() {
            instruction = r.instruction.clone();
        }
        let step_converged = refine.is_some() && r.error.is_none() && change <= cfg.delta_conv;
        steps.push(StepTrace {
            step,
            region_before: before,
            region_after: region,
            info: r.info,
            prompt_digest: r.digest,
            instruction: r.instruction,
            refinement: r.refinement.map(|(_, t)| t),
            boundary_change_s: change,
            converged: step_converged,
            error: r.error.map(|e| e.to_string()),
            calls: session.take_calls(),
        });
        if step_converged {
            converged = true;
            break;
        }
    }
    Ok(EventOutcome {
        initial,
        region,
        time: manifest.time_range(&region)?,
        instruction,
        converged,
        steps,
    })
}

/// [`reason_event`] for every event, in parallel; results keep input order.
pub fn run_reasoning(
    toolkit: &Toolkit,
    manifest: &FrameManifest,
    events: &[EventRegion],
    cfg: &AgentConfig,
    s2: &S2Config,
    demos: &[Demonstration],
) -> Result<Vec<EventOutcome>, AgentError> {
    events
        .par_iter()
        .map(|&e| reason_event(toolkit, manifest, e, cfg, s2, demos))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaAnswer {
    pub answer_index: Option<usize>,
    pub raw_text: String,
    /// The reply could not be mapped onto exactly one option.
    pub ambiguous: bool,
    pub prompt_digest: String,
}

pub fn answer_question(
    session: &mut ToolSession<'_>,
    bundles: &[EventInfoBundle],
    summaries: &[String],
    question: &Question,
    demos: &[Demonstration],
    cfg: &AgentConfig,
) -> Result<QaAnswer, AgentError> {
    if !(2..=26).contains(&question.options.len()) {
        return Err(AgentError::InvalidOptions(question.options.len()));
    }
    let prompt = build_prompt(Task::Qa, bundles, summaries, demos, Some(question))?;
    let prompt_digest = short_digest(prompt.as_bytes());
    let raw_text = session.complete_llm(&prompt, &cfg.completion())?;
    let answer_index = match_answer(&raw_text, &question.options).ok();
    Ok(QaAnswer {
        ambiguous: answer_index.is_none(),
        answer_index,
        raw_text,
        prompt_digest,
    })
}

/// One caption record per event, sorted by start time. Overlaps are kept.
pub fn produce_dvc_response(outcomes: &[EventOutcome]) -> Vec<DvcRecord> {
    let mut out: Vec<DvcRecord> = outcomes
        .iter()
        .map(|o| DvcRecord {
            start_s: o.time.start_s,
            end_s: o.time.end_s,
            caption: o.instruction.clone().unwrap_or_default(),
        })
        .collect();
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
    out
}

pub fn load_demonstrations(path: impl AsRef<Path>) -> Result<Vec<Demonstration>, AgentError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AgentError::Demo(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AgentError::Demo(format!("{}: {e}", path.display())))
}

/// The first `n` demonstrations for `task`, in file order.
pub fn select_demonstrations(all: &[Demonstration], task: Task, n: usize) -> Result<Vec<Demonstration>, AgentError> {
    let picked: Vec<Demonstration> = all.iter().filter(|d| d.task == task).take(n).cloned().collect();
    if picked.len() < n {
        return Err(AgentError::Demo(format!(
            "{n} {task} demonstrations requested but only {} available",
            picked.len()
        )));
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::stub::{LlmRule, LlmStub, SceneGraphStub, StubSpec};
    use crate::synthetic;
    use std::collections::BTreeMap;

    fn region(b: usize, e: usize) -> EventRegion {
        EventRegion::new(b, e).unwrap()
    }

    fn llm(text: &str) -> StubSpec {
        StubSpec {
            scene_graph: SceneGraphStub::Fixed {
                triples: synthetic::default_triples(),
            },
            llm: LlmStub::Fixed {
                text: text.into(),
                max_prompt_tokens: 4096,
            },
            ..Default::default()
        }
    }

    fn bundle(kit: &Toolkit, manifest: &FrameManifest, r: EventRegion, cfg: &AgentConfig) -> EventInfoBundle {
        gather_event_info(&mut kit.session().for_video(&manifest.video), manifest, r, cfg).unwrap()
    }

    #[test]
    fn gather_picks_keyframes_and_filters_triples() {
        let kit = Toolkit::from_stubs(&llm("x")).unwrap();
        let m = synthetic::uniform_manifest("v", 20);
        let cfg = AgentConfig::default();
        let b = bundle(&kit, &m, region(0, 9), &cfg);
        assert_eq!(b.frames.iter().map(|f| f.index).collect::<Vec<_>>(), vec![0, 3, 6, 9]);
        assert!(b
            .frames
            .iter()
            .all(|f| f.triples.len() == 1 && f.triples[0].confidence >= 0.4));
        assert!(!b.degenerate);

        let single = bundle(&kit, &m, region(5, 5), &cfg);
        assert_eq!(single.frames.len(), 1);
        assert!(single.degenerate);

        let strict = AgentConfig {
            tau: 0.9,
            ..Default::default()
        };
        let b = bundle(&kit, &m, region(0, 9), &strict);
        assert!(b.frames.iter().all(|f| f.triples.is_empty() && !f.caption.is_empty()));

        let center = AgentConfig {
            n_frames: 1,
            ..Default::default()
        };
        assert_eq!(bundle(&kit, &m, region(2, 9), &center).frames[0].index, 5);
    }

    #[test]
    fn prompts_are_stable_and_ordered() {
        let kit = Toolkit::from_stubs(&llm("x")).unwrap();
        let m = synthetic::uniform_manifest("v", 20);
        let cfg = AgentConfig::default();
        let late = bundle(&kit, &m, region(10, 13), &cfg);
        let early = bundle(&kit, &m, region(0, 3), &cfg);
        let two = [late.clone(), early.clone()];
        let a = build_prompt(Task::Dvc, &two, &[], &[], None).unwrap();
        assert_eq!(a, build_prompt(Task::Dvc, &two, &[], &[], None).unwrap());
        assert!(a.find("Event 1 @0.0s-3.0s").unwrap() < a.find("Event 2 @10.0s-13.0s").unwrap());
        assert!(!a.contains("Example"));
        assert!(
            a.contains("Frame @0.0s | Caption: a frame | Triples: person[10,20,200,340] near table[220,100,400,300]\n")
        );
        assert!(a.ends_with(prompt::DESCRIBE_MARKER));

        assert_eq!(
            build_prompt(Task::Qa, &two, &[], &[], None),
            Err(AgentError::MissingQuestion)
        );
        let q = Question {
            text: "Where?".into(),
            options: vec!["here".into(), "there".into()],
        };
        let demo = Demonstration {
            task: Task::Qa,
            bundles: vec![early.clone()],
            summaries: vec![],
            question: Some(q.clone()),
            output: "B".into(),
        };
        let p = build_prompt(Task::Qa, &[early], &["a summary".into()], &[demo], Some(&q)).unwrap();
        assert!(p.contains("### Example 1\n"));
        assert!(p.contains("(B) there\nAnswer: B\n\n### Now your turn\n"));
        assert!(p.contains("| Summary: a summary\n"));
        assert!(p.ends_with("Question: Where?\n(A) here\n(B) there\nAnswer:"));
    }

    #[test]
    fn instruction_cleanup() {
        assert_eq!(
            clean_completion("\n\n  A person opens the closet\nmore"),
            Some("A person opens the closet".into())
        );
        assert_eq!(
            clean_completion("**Instruction:** a man runs"),
            Some("a man runs".into())
        );
        assert_eq!(clean_completion("- \"someone waves\""), Some("someone waves".into()));
        assert_eq!(clean_completion(" \n\n"), None);

        let m = synthetic::uniform_manifest("v", 20);
        let cfg = AgentConfig::default();
        let kit = Toolkit::from_stubs(&llm("A person opens the closet")).unwrap();
        let b = bundle(&kit, &m, region(0, 9), &cfg);
        let (l, _) = propose_instruction(&mut kit.session(), &b, &[], &cfg).unwrap();
        assert_eq!(l, "A person opens the closet");
        let kit = Toolkit::from_stubs(&llm("  \n")).unwrap();
        assert_eq!(
            propose_instruction(&mut kit.session(), &b, &[], &cfg),
            Err(AgentError::EmptyCompletion)
        );
    }

    #[test]
    fn loop_bounds_and_convergence() {
        let world = synthetic::peaked_world();
        let mut stubs = world.stubs.clone();
        stubs.llm = LlmStub::Fixed {
            text: world.instruction.clone(),
            max_prompt_tokens: 4096,
        };
        let kit = Toolkit::from_stubs(&stubs).unwrap();
        let s2 = S2Config::default();
        let m = &world.manifest;

        let t0 = AgentConfig {
            t_max: 0,
            ..Default::default()
        };
        let out = reason_event(&kit, m, world.start, &t0, &s2, &[]).unwrap();
        assert_eq!(out.region, world.start);
        assert_eq!(out.steps.len(), 1);
        assert!(out.steps[0].refinement.is_none());
        assert_eq!(out.instruction.as_deref(), Some(world.instruction.as_str()));

        let t1 = AgentConfig::default();
        let out = reason_event(&kit, m, world.start, &t1, &s2, &[]).unwrap();
        assert_eq!(out.steps.len(), 1);
        assert_eq!(out.region, world.truth);
        assert!(!out.converged);
        assert_eq!(out.steps[0].boundary_change_s, 20.0);

        // from the truth the refinement is a fixed point, so step 1 converges
        let t5 = AgentConfig {
            t_max: 5,
            ..Default::default()
        };
        let out = reason_event(&kit, m, world.truth, &t5, &s2, &[]).unwrap();
        assert_eq!(out.steps.len(), 1);
        assert!(out.converged);

        // from the start, step 1 moves and step 2 converges
        let out = reason_event(&kit, m, world.start, &t5, &s2, &[]).unwrap();
        assert_eq!(out.steps.len(), 2);
        assert!(out.steps[1].converged);
        assert!(out.steps.iter().all(|s| !s.calls.is_empty()));
    }

    #[test]
    fn failed_step_keeps_region() {
        let mut stubs = llm("anything");
        stubs.llm = LlmStub::Fixed {
            text: "x".into(),
            max_prompt_tokens: 5,
        };
        let kit = Toolkit::from_stubs(&stubs).unwrap();
        let m = synthetic::uniform_manifest("v", 30);
        let cfg = AgentConfig {
            t_max: 2,
            ..Default::default()
        };
        let out = reason_event(&kit, &m, region(5, 15), &cfg, &S2Config::default(), &[]).unwrap();
        assert_eq!(out.region, region(5, 15));
        assert_eq!(out.steps.len(), 2);
        assert!(out
            .steps
            .iter()
            .all(|s| s.error.as_deref().is_some_and(|e| e.contains("exceeds"))));
        assert_eq!(out.instruction, None);
        assert_eq!(produce_dvc_response(&[out])[0].caption, "");
    }

    #[test]
    fn answers_are_parsed() {
        let kit_for = |reply: &str| {
            let mut s = llm("x");
            s.llm = LlmStub::Scripted {
                by_hash: BTreeMap::new(),
                rules: vec![LlmRule {
                    contains: vec!["Question:".into()],
                    excludes: vec![],
                    reply: reply.into(),
                }],
                default: None,
                max_prompt_tokens: 4096,
            };
            Toolkit::from_stubs(&s).unwrap()
        };
        let m = synthetic::uniform_manifest("v", 20);
        let cfg = AgentConfig::default();
        let q = Question {
            text: "What is held?".into(),
            options: ["a cup", "a phone", "a book", "a towel"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        };
        for (reply, want) in [("B", Some(1)), ("a towel", Some(3)), ("the weather is nice", None)] {
            let kit = kit_for(reply);
            let b = bundle(&kit, &m, region(0, 9), &cfg);
            let a = answer_question(&mut kit.session(), &[b], &[], &q, &[], &cfg).unwrap();
            assert_eq!(a.answer_index, want);
            assert_eq!(a.ambiguous, want.is_none());
        }
        let kit = kit_for("A");
        let one = Question {
            text: "?".into(),
            options: vec!["only".into()],
        };
        assert_eq!(
            answer_question(&mut kit.session(), &[], &[], &one, &[], &cfg),
            Err(AgentError::InvalidOptions(1))
        );
    }

    #[test]
    fn dvc_records_sorted_and_overlaps_kept() {
        let m = synthetic::uniform_manifest("v", 30);
        let outcome = |b: usize, e: usize, text: &str| EventOutcome {
            initial: region(b, e),
            region: region(b, e),
            time: m.time_range(&region(b, e)).unwrap(),
            instruction: Some(text.into()),
            converged: true,
            steps: vec![],
        };
        let recs = produce_dvc_response(&[
            outcome(10, 20, "second"),
            outcome(2, 12, "first"),
            outcome(10, 15, "mid"),
        ]);
        let caps: Vec<&str> = recs.iter().map(|r| r.caption.as_str()).collect();
        assert_eq!(caps, vec!["first", "mid", "second"]);
        assert_eq!((recs[0].start_s, recs[0].end_s), (2.0, 12.0));
    }

    #[test]
    fn demonstration_selection() {
        let kit = Toolkit::from_stubs(&llm("x")).unwrap();
        let m = synthetic::uniform_manifest("v", 20);
        let b = bundle(&kit, &m, region(0, 9), &AgentConfig::default());
        let demo = |task, out: &str| Demonstration {
            task,
            bundles: vec![b.clone()],
            summaries: vec![],
            question: None,
            output: out.into(),
        };
        let all = vec![demo(Task::Dvc, "one"), demo(Task::Qa, "B"), demo(Task::Dvc, "two")];
        let picked = select_demonstrations(&all, Task::Dvc, 2).unwrap();
        assert_eq!(
            picked.iter().map(|d| d.output.as_str()).collect::<Vec<_>>(),
            vec!["one", "two"]
        );
        assert!(select_demonstrations(&all, Task::Qa, 2).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demos.json");
        std::fs::write(&path, serde_json::to_string(&all).unwrap()).unwrap();
        assert_eq!(load_demonstrations(&path).unwrap(), all);
    }
}
