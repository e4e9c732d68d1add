// SPDX-License-Identifier: MIT OR Apache-2.0

//! Instrumented decoder-only transformer.
//!
//! [`Model`] wraps weights, a tokenizer, and the hookable forward pass in
//! [`forward`]. The same addressing scheme works for the bundled tiny models
//! and for Llama-family checkpoints loaded with [`reference::load`].

mod address;
mod composition;
mod config;
mod forward;
pub mod planted;
pub mod reference;
mod tiny;
mod tokenizer;
mod weights;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{s, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use address::{ActivationAddress, Component, HeadId};
pub use composition::{composition_score, CompositionMode};
pub use config::{ModelConfig, RopeScaling};
pub use forward::{argmax, top_k, Hooks, RunOutput};
pub use tiny::{make_tiny_model, make_tiny_model_with, TinyConfig};
pub use tokenizer::{HfTokenizer, TinyTokenizer, Tokenizer, TINY_BOS, TINY_UNK};
pub use weights::{LayerWeights, ModelWeights};

use crate::error::{Error, Result};
use crate::phonetics::PronunciationLexicon;

/// A loaded model: identifier, dimensions, weights, and tokenizer.
///
/// The forward pass takes `&self` and keeps no state between calls, so a
/// handle can be shared read-only across worker threads.
pub struct Model {
    pub id: String,
    pub config: ModelConfig,
    pub weights: ModelWeights,
    pub tokenizer: Box<dyn Tokenizer>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("id", &self.id)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

/// Prompt, tokens, final-position logits, and captured activations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapturedRun {
    pub prompt: String,
    pub tokens: Vec<u32>,
    pub logits: Vec<f32>,
    pub captures: BTreeMap<ActivationAddress, Vec<f32>>,
}

impl CapturedRun {
    pub fn get(&self, addr: &ActivationAddress) -> Result<&[f32]> {
        self.captures
            .get(addr)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Address(format!("{addr} was not captured")))
    }

    pub fn final_position(&self) -> usize {
        self.tokens.len() - 1
    }
}

/// One head's additive contribution to the residual stream at one position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultVector {
    pub values: Vec<f32>,
    pub head: HeadId,
    pub position: usize,
    pub source: String,
}

/// A decoded token with its logit-lens score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub id: u32,
    pub token: String,
    pub score: f32,
}

impl Model {
    pub fn new(
        id: impl Into<String>,
        config: ModelConfig,
        weights: ModelWeights,
        tokenizer: Box<dyn Tokenizer>,
    ) -> Result<Self> {
        weights.validate(&config)?;
        Ok(Self {
            id: id.into(),
            config,
            weights,
            tokenizer,
        })
    }

    /// BOS + prompt tokens.
    pub fn encode_prompt(&self, prompt: &str) -> Result<Vec<u32>> {
        let ids = self.tokenizer.encode_prompt(prompt)?;
        if ids.len() > self.config.max_seq_len {
            return Err(Error::Length {
                len: ids.len(),
                max: self.config.max_seq_len,
            });
        }
        Ok(ids)
    }

    /// Token id of `word` in its sentence-medial form (leading space), if it
    /// encodes to exactly one token.
    pub fn word_token(&self, word: &str) -> Option<u32> {
        match self.tokenizer.encode(&format!(" {word}")).ok()?.as_slice() {
            [id] => Some(*id),
            _ => None,
        }
    }

    pub fn run_with_capture(
        &self,
        prompt: &str,
        addresses: &BTreeSet<ActivationAddress>,
    ) -> Result<CapturedRun> {
        let tokens = self.encode_prompt(prompt)?;
        let hooks = Hooks {
            capture: addresses.clone(),
            ..Hooks::default()
        };
        let out = self.run(&tokens, &hooks)?;
        Ok(CapturedRun {
            prompt: prompt.to_string(),
            tokens,
            logits: out.logits,
            captures: out.captures,
        })
    }

    pub fn run_with_patch(
        &self,
        prompt: &str,
        patches: BTreeMap<ActivationAddress, Vec<f32>>,
    ) -> Result<Vec<f32>> {
        let tokens = self.encode_prompt(prompt)?;
        let hooks = Hooks {
            patches,
            ..Hooks::default()
        };
        Ok(self.run(&tokens, &hooks)?.logits)
    }

    /// Add `delta` to the embedding row at `position`, returning final logits
    /// and a greedy continuation of `n_continue` tokens.
    pub fn run_with_embedding_edit(
        &self,
        prompt: &str,
        position: usize,
        delta: &[f32],
        n_continue: usize,
    ) -> Result<(Vec<f32>, Vec<u32>)> {
        let tokens = self.encode_prompt(prompt)?;
        if position >= tokens.len() {
            return Err(Error::Index {
                index: position,
                len: tokens.len(),
            });
        }
        let hooks = Hooks {
            embedding_edits: vec![(position, delta.to_vec())],
            ..Hooks::default()
        };
        let logits = self.run(&tokens, &hooks)?.logits;
        let cont = self.generate(&tokens, &hooks, n_continue)?;
        Ok((logits, cont))
    }

    /// Zero the listed heads' z at every position.
    pub fn ablate_heads(
        &self,
        prompt: &str,
        heads: &BTreeSet<HeadId>,
        n_continue: usize,
    ) -> Result<(Vec<f32>, Vec<u32>)> {
        let tokens = self.encode_prompt(prompt)?;
        let hooks = Hooks {
            ablate: heads.clone(),
            ..Hooks::default()
        };
        let logits = self.run(&tokens, &hooks)?.logits;
        let cont = self.generate(&tokens, &hooks, n_continue)?;
        Ok((logits, cont))
    }

    pub fn attention_pattern(&self, prompt: &str, head: HeadId) -> Result<Array2<f32>> {
        let tokens = self.encode_prompt(prompt)?;
        let hooks = Hooks {
            patterns: BTreeSet::from([head]),
            ..Hooks::default()
        };
        let mut out = self.run(&tokens, &hooks)?;
        Ok(out.patterns.remove(&head).expect("pattern requested"))
    }

    /// Slice of the output projection belonging to `head`, `[d_model, d_head]`.
    pub fn w_o_head(&self, head: HeadId) -> Result<ndarray::ArrayView2<'_, f32>> {
        self.check_head(head)?;
        let dh = self.config.d_head;
        Ok(self.weights.layers[head.layer]
            .wo
            .slice(s![.., head.head * dh..(head.head + 1) * dh]))
    }

    pub(crate) fn check_head(&self, head: HeadId) -> Result<()> {
        if head.layer >= self.config.n_layers || head.head >= self.config.n_heads {
            return Err(Error::Address(format!("head {head} out of range")));
        }
        Ok(())
    }

    /// Map a head's z through its output-projection slice (bias excluded).
    pub fn head_result_vector(&self, z: &[f32], head: HeadId) -> Result<Vec<f32>> {
        if z.len() != self.config.d_head {
            return Err(Error::Shape {
                expected: self.config.d_head,
                got: z.len(),
            });
        }
        Ok(self.w_o_head(head)?.dot(&ArrayView1::from(z)).to_vec())
    }

    /// Full-vocabulary logit-lens scores of a residual-space vector.
    pub fn lens_logits(&self, vector: &[f32]) -> Result<Vec<f32>> {
        if vector.len() != self.config.d_model {
            return Err(Error::Shape {
                expected: self.config.d_model,
                got: vector.len(),
            });
        }
        Ok(self.lens_logits_view(ArrayView1::from(vector)))
    }

    /// Top-`k` tokens of the logit lens (final norm, then unembedding).
    pub fn logit_lens(&self, vector: &[f32], k: usize) -> Result<Vec<TokenScore>> {
        if k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        let logits = self.lens_logits(vector)?;
        Ok(top_k(&logits, k)
            .into_iter()
            .map(|id| TokenScore {
                id,
                token: self.tokenizer.token_str(id),
                score: logits[id as usize],
            })
            .collect())
    }

    /// Lexicon words whose leading-space form is a single token.
    pub fn single_token_words(&self, lexicon: &PronunciationLexicon) -> Vec<String> {
        let words: Vec<&str> = lexicon.words().collect();
        crate::par::map(&words, |w| self.word_token(w).map(|_| w.to_string()))
            .into_iter()
            .flatten()
            .collect()
    }

    /// Addresses of every head z and MLP output at every position.
    pub fn scan_addresses(&self, seq_len: usize) -> BTreeSet<ActivationAddress> {
        let mut out = BTreeSet::new();
        for layer in 0..self.config.n_layers {
            for p in 0..seq_len {
                for h in 0..self.config.n_heads {
                    out.insert(ActivationAddress::head_z(layer, h, p));
                }
                out.insert(ActivationAddress::layer_scoped(layer, Component::MlpOut, p));
                out.insert(ActivationAddress::layer_scoped(layer, Component::ResidPost, p));
            }
        }
        out
    }
}
