// SPDX-License-Identifier: MIT OR Apache-2.0

//! Phonetic interpretability toolkit for decoder-only language models.
//!
//! Covers phoneme probing of token embeddings, embedding-space vowel
//! interventions, activation patching, attention-head analysis, and PCA
//! geometry of head result vectors. Everything runs on the bundled tiny
//! models; Llama-family checkpoints load through [`model::reference`].

pub mod artifacts;
pub mod config;
pub mod error;
pub mod geometry;
pub mod head_analysis;
pub mod interventions;
pub mod model;
pub mod par;
pub mod patching;
pub mod phonetics;
pub mod probe;
pub mod selftest;

pub use error::{Error, Result};
