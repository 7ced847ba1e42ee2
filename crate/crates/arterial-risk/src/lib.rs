//! Command-line pipeline for arterial crash-risk analysis.
//!
//! This crate is the I/O and orchestration companion to `arterial-core`:
//! it parses configs and CSV/JSON artifacts, wires the core's feature
//! extraction, matched sampling, samplers, and scoring into five commands
//! (`simulate`, `prepare`, `fit`, `evaluate`, `sweep`), and keeps every
//! command a pure function of its config and inputs so reruns are
//! byte-identical.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod iso;
pub mod runner;
pub mod table;
