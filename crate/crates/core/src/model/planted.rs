// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hand-built tiny models with a known mechanism.
//!
//! Residual layout (`d_model = 80`):
//!
//! | dims     | content                                             |
//! |----------|-----------------------------------------------------|
//! | 0..44    | one axis per inventory phoneme                      |
//! | 44       | key flag (lexicon word tokens)                      |
//! | 45       | query flag (lexicon word tokens and `:`)            |
//! | 46..66   | copy-head output, one axis per inventory vowel      |
//! | 66..80   | per-token noise                                     |
//!
//! A lexicon word embeds as `phoneme_scale · multihot + flags`. The copy
//! head attends from query-flagged positions to key-flagged ones (through the
//! slowest rotary pair, so position barely matters), reads the vowel axes of
//! the attended token, and writes them to the output axes. Each configured
//! answer word is unembedded from its vowel's output axis, so the argmax
//! answer is the vowel with the largest coefficient in the attended word.
//! The planted probe is the identity on the phoneme axes.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tiny::gaussian;
use super::{HeadId, LayerWeights, Model, ModelConfig, ModelWeights, TinyTokenizer, Tokenizer};
use crate::phonetics::{PronunciationLexicon, INVENTORY_SIZE};
use crate::probe::{ProbeMatrix, TrainingMeta};

pub const KEY_DIM: usize = 44;
pub const QUERY_DIM: usize = 45;
pub const OUT_START: usize = 46;
const N_VOWEL_AXES: usize = 20;
const NOISE_START: usize = OUT_START + N_VOWEL_AXES;
pub const D_MODEL: usize = 80;

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub n_layers: usize,
    pub n_heads: usize,
    pub copy_head: HeadId,
    /// Std of random weights in every component except the copy head.
    pub noise: f32,
    pub seed: u64,
    pub phoneme_scale: f32,
    pub flag: f32,
    pub qk_weight: f32,
    pub unembed_scale: f32,
    /// `(vowel, answer word)`; the word must be in the mini lexicon.
    pub answers: Vec<(String, String)>,
    /// Digit tokens `"0"`, `"1"`, … given logits above every answer.
    pub decoys: usize,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        let answers = [
            ("i", "keen"),
            ("æ", "back"),
            ("ʌ", "brush"),
            ("ɛ", "bet"),
            ("o", "more"),
            ("ɑ", "log"),
            ("ɪ", "kit"),
            ("u", "soon"),
            ("ʊ", "look"),
            ("eɪ", "lake"),
            ("aɪ", "lime"),
            ("aʊ", "cow"),
            ("ɔɪ", "toy"),
            ("oʊ", "show"),
        ]
        .iter()
        .map(|(v, w)| (v.to_string(), w.to_string()))
        .collect();
        Self {
            n_layers: 1,
            n_heads: 2,
            copy_head: HeadId::new(0, 0),
            noise: 0.0,
            seed: 0,
            phoneme_scale: 5.0,
            flag: 4.0,
            qk_weight: 3.0,
            unembed_scale: 10.0,
            answers,
            decoys: 0,
        }
    }
}

impl PlantedSpec {
    /// Two-layer variant with the copy head in the last layer and small
    /// random weights everywhere else.
    pub fn two_layer(noise: f32, seed: u64) -> Self {
        Self {
            n_layers: 2,
            copy_head: HeadId::new(1, 0),
            noise,
            seed,
            ..Self::default()
        }
    }
}

pub struct Planted {
    pub model: Model,
    pub probe: ProbeMatrix,
    pub spec: PlantedSpec,
    /// Answer token id per vowel.
    pub answer_tokens: BTreeMap<String, u32>,
    pub lexicon: PronunciationLexicon,
}

pub fn build(spec: PlantedSpec) -> Planted {
    let lexicon = PronunciationLexicon::mini();
    let inv = lexicon.inventory().clone();
    let vowels: Vec<String> = inv.vowels().map(|p| p.symbol.clone()).collect();
    assert_eq!(vowels.len(), N_VOWEL_AXES);
    let tok = TinyTokenizer::new(&lexicon, 128);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let d_head = N_VOWEL_AXES;
    let config = ModelConfig {
        n_layers: spec.n_layers,
        n_heads: spec.n_heads,
        n_kv_heads: spec.n_heads,
        d_model: D_MODEL,
        d_head,
        d_mlp: 16,
        vocab_size: 128,
        max_seq_len: 128,
        rms_eps: 1e-5,
        rope_theta: 1.0e6,
        rope_scaling: None,
    };

    let mut embed = Array2::<f32>::zeros((128, D_MODEL));
    let noise = gaussian(&mut rng, 128, D_MODEL - NOISE_START, 0.5);
    for id in 0..128usize {
        for j in NOISE_START..D_MODEL {
            embed[[id, j]] = noise[[id, j - NOISE_START]];
        }
    }
    for w in lexicon.words() {
        let id = tok.id(&format!(" {w}")).expect("lexicon words are in the tiny vocab") as usize;
        for (i, bit) in lexicon.multihot(w).expect("word in lexicon").iter().enumerate() {
            embed[[id, i]] = spec.phoneme_scale * f32::from(*bit);
        }
        embed[[id, KEY_DIM]] = spec.flag;
        embed[[id, QUERY_DIM]] = spec.flag;
    }
    embed[[tok.id(":").expect("colon token") as usize, QUERY_DIM]] = spec.flag;

    let hd = spec.n_heads * d_head;
    let layers = (0..spec.n_layers)
        .map(|layer| {
            let mut lw = LayerWeights {
                attn_norm: Array1::ones(D_MODEL),
                wq: gaussian(&mut rng, hd, D_MODEL, spec.noise),
                wk: gaussian(&mut rng, hd, D_MODEL, spec.noise),
                wv: gaussian(&mut rng, hd, D_MODEL, spec.noise),
                wo: gaussian(&mut rng, D_MODEL, hd, spec.noise),
                o_bias: None,
                mlp_norm: Array1::ones(D_MODEL),
                w_gate: gaussian(&mut rng, 16, D_MODEL, spec.noise),
                w_up: gaussian(&mut rng, 16, D_MODEL, spec.noise),
                w_down: gaussian(&mut rng, D_MODEL, 16, spec.noise),
            };
            if layer == spec.copy_head.layer {
                let base = spec.copy_head.head * d_head;
                for r in base..base + d_head {
                    lw.wq.row_mut(r).fill(0.0);
                    lw.wk.row_mut(r).fill(0.0);
                    lw.wv.row_mut(r).fill(0.0);
                    lw.wo.column_mut(r).fill(0.0);
                }
                let slow = base + d_head / 2 - 1;
                lw.wq[[slow, QUERY_DIM]] = spec.qk_weight;
                lw.wk[[slow, KEY_DIM]] = spec.qk_weight;
                for (j, v) in vowels.iter().enumerate() {
                    let pdim = inv.index_of(v).expect("vowel in inventory");
                    lw.wv[[base + j, pdim]] = 1.0;
                    lw.wo[[OUT_START + j, base + j]] = 1.0;
                }
            }
            lw
        })
        .collect();

    let mut unembed = Array2::<f32>::zeros((128, D_MODEL));
    let mut answer_tokens = BTreeMap::new();
    for (v, w) in &spec.answers {
        let j = vowels.iter().position(|x| x == v).expect("answer vowel in inventory");
        let id = tok.id(&format!(" {w}")).expect("answer word in tiny vocab");
        unembed[[id as usize, OUT_START + j]] = spec.unembed_scale;
        answer_tokens.insert(v.clone(), id);
    }
    for i in 0..spec.decoys {
        let id = tok.id(&i.to_string()).expect("digit token");
        unembed[[id as usize, QUERY_DIM]] = 30.0 - i as f32;
    }

    let weights = ModelWeights {
        embed,
        layers,
        final_norm: Array1::ones(D_MODEL),
        unembed: Some(unembed),
    };
    let model = Model::new(
        format!("planted:{}", spec.seed),
        config,
        weights,
        Box::new(tok) as Box<dyn Tokenizer>,
    )
    .expect("planted model is well-formed");

    let mut rows = Array2::<f32>::zeros((INVENTORY_SIZE, D_MODEL));
    for i in 0..INVENTORY_SIZE {
        rows[[i, i]] = 1.0;
    }
    let probe = ProbeMatrix::new(
        rows,
        Array1::zeros(INVENTORY_SIZE),
        &inv,
        TrainingMeta::planted(),
    );
    Planted {
        model,
        probe,
        spec,
        answer_tokens,
        lexicon,
    }
}
