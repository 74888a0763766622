//! Math-aware headline generation.
//!
//! The pipeline turns detailed math questions (mixed text and LaTeX) into
//! concise headlines: corpus preprocessing with a LaTeX lexer, a shared
//! vocabulary with per-example copy ids, a pointer-generator encoder/decoder
//! whose equation embeddings are enriched by per-equation multi-head
//! attention, beam-search decoding, and math-aware evaluation metrics with
//! extractive baselines.

pub mod corpus;
pub mod decoding;
pub mod eval;
pub mod graph;
pub mod io;
pub mod model;
pub mod training;
pub mod vocab;
