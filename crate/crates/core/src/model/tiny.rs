// SPDX-License-Identifier: MIT OR Apache-2.0

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LayerWeights, Model, ModelConfig, ModelWeights, TinyTokenizer};
use crate::phonetics::PronunciationLexicon;

/// Dimensions of a randomly initialized tiny model.
#[derive(Debug, Clone)]
pub struct TinyConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
}

impl Default for TinyConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            n_heads: 4,
            n_kv_heads: 2,
            d_model: 32,
            d_head: 8,
            d_mlp: 64,
            vocab_size: 128,
        }
    }
}

pub(crate) fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f32) -> Array2<f32> {
    let n = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_simple_fn((rows, cols), || n.sample(rng))
}

fn gain(rng: &mut ChaCha8Rng, d: usize) -> Array1<f32> {
    let n = Normal::new(1.0, 0.1).expect("valid std");
    Array1::from_shape_simple_fn(d, || n.sample(rng))
}

/// Deterministic random tiny model with the bundled mini lexicon's tokenizer.
pub fn make_tiny_model(seed: u64) -> Model {
    make_tiny_model_with(seed, &TinyConfig::default())
}

pub fn make_tiny_model_with(seed: u64, tc: &TinyConfig) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        n_layers: tc.n_layers,
        n_heads: tc.n_heads,
        n_kv_heads: tc.n_kv_heads,
        d_model: tc.d_model,
        d_head: tc.d_head,
        d_mlp: tc.d_mlp,
        vocab_size: tc.vocab_size,
        max_seq_len: 128,
        rms_eps: 1e-5,
        rope_theta: 10_000.0,
        rope_scaling: None,
    };
    let d = tc.d_model;
    let hd = tc.n_heads * tc.d_head;
    let kvd = tc.n_kv_heads * tc.d_head;
    let fan = |n: usize| 1.0 / (n as f32).sqrt();
    let layers = (0..tc.n_layers)
        .map(|_| LayerWeights {
            attn_norm: gain(&mut rng, d),
            wq: gaussian(&mut rng, hd, d, fan(d)),
            wk: gaussian(&mut rng, kvd, d, fan(d)),
            wv: gaussian(&mut rng, kvd, d, fan(d)),
            wo: gaussian(&mut rng, d, hd, fan(hd)),
            o_bias: Some(gaussian(&mut rng, 1, d, 0.1).into_shape_with_order(d).expect("1 x d")),
            mlp_norm: gain(&mut rng, d),
            w_gate: gaussian(&mut rng, tc.d_mlp, d, fan(d)),
            w_up: gaussian(&mut rng, tc.d_mlp, d, fan(d)),
            w_down: gaussian(&mut rng, d, tc.d_mlp, fan(tc.d_mlp)),
        })
        .collect();
    let weights = ModelWeights {
        embed: gaussian(&mut rng, tc.vocab_size, d, 1.0),
        layers,
        final_norm: gain(&mut rng, d),
        unembed: Some(gaussian(&mut rng, tc.vocab_size, d, fan(d))),
    };
    let tokenizer = TinyTokenizer::new(&PronunciationLexicon::mini(), tc.vocab_size);
    Model::new(format!("tiny:{seed}"), config, weights, Box::new(tokenizer))
        .expect("tiny model is well-formed")
}
