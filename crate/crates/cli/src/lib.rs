//! Benchmark generator, experiment harness, and CLI plumbing for the
//! distributed dual-decomposition library.

pub mod experiment;
pub mod pev;
