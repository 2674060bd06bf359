//! Instruction-guided video event localization with an LLM tool-use loop.
//!
//! The pipeline first proposes `n` event regions by growing them around
//! evenly spaced centers while neighbouring frames stay similar to the
//! region mean ([`segment`]). An agent loop ([`agent`]) then gathers captions
//! and scene graphs for each event, asks an LLM for an instruction describing
//! it, and refines the event boundaries by hill-climbing a Hungarian matching
//! score between the instruction's open-IE assertions and the event's
//! keyframes ([`refine`]). [`eval`] scores question answering and dense
//! captioning outputs.

pub mod agent;
pub mod assignment;
pub mod domain;
pub mod eval;
pub mod media;
pub mod pipeline;
pub mod providers;
pub mod refine;
pub mod segment;
pub mod synthetic;
