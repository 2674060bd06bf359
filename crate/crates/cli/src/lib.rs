//! Library side of the `eventscope` binary, exposed for tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
