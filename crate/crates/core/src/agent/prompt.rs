//! Byte-stable prompt rendering.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{AgentError, EventInfoBundle, Task};
use crate::providers::SceneEntity;

pub const DESCRIBE_PREAMBLE: &str = "You are given tool outputs (captions and scene-graph triples) for \
sampled frames of a video event. Reply with one short sentence describing what happens in the event.";
pub const ANSWER_PREAMBLE: &str = "You are given tool outputs (captions and scene-graph triples) for \
sampled frames of video events. Answer the multiple-choice question with the letter of the correct option.";
pub const DESCRIBE_MARKER: &str = "Instruction:";
pub const ANSWER_MARKER: &str = "Answer:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub text: String,
    pub options: Vec<String>,
}

/// A worked example: event information plus the expected reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demonstration {
    pub task: Task,
    pub bundles: Vec<EventInfoBundle>,
    #[serde(default)]
    pub summaries: Vec<String>,
    #[serde(default)]
    pub question: Option<Question>,
    pub output: String,
}

pub fn option_letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

fn fmt_entity(out: &mut String, e: &SceneEntity) {
    let [x1, y1, x2, y2] = e.bbox;
    let _ = write!(out, "{}[{x1},{y1},{x2},{y2}]", e.label);
}

fn render_events(out: &mut String, bundles: &[EventInfoBundle], summaries: &[String]) {
    let mut order: Vec<usize> = (0..bundles.len()).collect();
    order.sort_by_key(|&i| (bundles[i].event.begin, bundles[i].event.end, i));
    if let Some(first) = bundles.first() {
        let v = &first.video;
        let _ = writeln!(
            out,
            "Video {} | duration {:.1}s | resolution {}x{}",
            v.video_id, v.duration_s, v.width, v.height
        );
    }
    for (n, &i) in order.iter().enumerate() {
        let b = &bundles[i];
        let _ = write!(out, "Event {} @{:.1}s-{:.1}s", n + 1, b.time.start_s, b.time.end_s);
        if let Some(s) = summaries.get(i) {
            let _ = write!(out, " | Summary: {s}");
        }
        out.push('\n');
        for f in &b.frames {
            let _ = write!(out, "Frame @{:.1}s | Caption: {} | Triples: ", f.timestamp_s, f.caption);
            for (k, t) in f.triples.iter().enumerate() {
                if k > 0 {
                    out.push_str("; ");
                }
                fmt_entity(out, &t.subject);
                let _ = write!(out, " {} ", t.predicate);
                fmt_entity(out, &t.object);
            }
            out.push('\n');
        }
    }
}

fn render_query(out: &mut String, task: Task, question: Option<&Question>) -> Result<(), AgentError> {
    match task {
        Task::Dvc => out.push_str(DESCRIBE_MARKER),
        Task::Qa => {
            let q = question.ok_or(AgentError::MissingQuestion)?;
            let _ = writeln!(out, "Question: {}", q.text);
            for (i, o) in q.options.iter().enumerate() {
                let _ = writeln!(out, "({}) {}", option_letter(i), o);
            }
            out.push_str(ANSWER_MARKER);
        }
    }
    Ok(())
}

/// Render a prompt. `summaries[i]`, when present, is shown next to `bundles[i]`.
///
/// Demonstrations are rendered with the same code as the live query and are
/// prepended in the given order.
pub fn build_prompt(
    task: Task,
    bundles: &[EventInfoBundle],
    summaries: &[String],
    demos: &[Demonstration],
    question: Option<&Question>,
) -> Result<String, AgentError> {
    if task == Task::Qa && question.is_none() {
        return Err(AgentError::MissingQuestion);
    }
    let mut out = String::new();
    out.push_str(match task {
        Task::Dvc => DESCRIBE_PREAMBLE,
        Task::Qa => ANSWER_PREAMBLE,
    });
    out.push_str("\n\n");
    for (k, d) in demos.iter().enumerate() {
        let _ = writeln!(out, "### Example {}", k + 1);
        render_events(&mut out, &d.bundles, &d.summaries);
        render_query(&mut out, d.task, d.question.as_ref())?;
        let _ = write!(out, " {}\n\n", d.output.trim());
    }
    if !demos.is_empty() {
        out.push_str("### Now your turn\n");
    }
    render_events(&mut out, bundles, summaries);
    render_query(&mut out, task, question)?;
    Ok(out)
}
