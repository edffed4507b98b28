//! Quantified semantics for line-chart annotations.
//!
//! The crate generates synthetic stimulus charts, ingests crowdsourced
//! annotations of them, derives per-word slope and agreement statistics,
//! and uses those statistics to find and label visual features (shapes and
//! slopes) in unlabeled signals.

pub mod chartgen;
pub mod dataset;
pub mod detect;
pub mod io;
pub mod llm;
pub mod render;
pub mod semantics;
pub mod sigproc;
pub mod synth;
