//! Dual-confidence routing for agent actions: decide per task whether to
//! answer directly, call a tool, load a skill, verify, or stop.
//!
//! The crate also ships the deterministic benchmark harness (`bench`) and
//! the `mesa` command-line tool (`cli`).

pub mod backend;
pub mod bank;
pub mod bench;
pub mod cards;
pub mod cli;
pub mod confidence;
pub mod probe;
pub mod router;
