// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

/// Llama-3 style frequency-dependent RoPE rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeScaling {
    pub factor: f32,
    pub low_freq_factor: f32,
    pub high_freq_factor: f32,
    pub original_max_position_embeddings: usize,
}

/// Dimensions and hyper-parameters of a decoder-only transformer
/// (pre-norm RMSNorm, rotary attention with grouped KV heads, SwiGLU MLP).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub rms_eps: f32,
    pub rope_theta: f32,
    pub rope_scaling: Option<RopeScaling>,
}

impl ModelConfig {
    pub fn kv_group(&self, head: usize) -> usize {
        head / (self.n_heads / self.n_kv_heads)
    }

    /// Rotary inverse frequencies, one per dimension pair.
    pub fn inv_freq(&self) -> Vec<f32> {
        let half = self.d_head / 2;
        (0..half)
            .map(|i| {
                let f = self.rope_theta.powf(-(2.0 * i as f32) / self.d_head as f32);
                match self.rope_scaling {
                    Some(s) => scale_freq(f, s),
                    None => f,
                }
            })
            .collect()
    }
}

fn scale_freq(freq: f32, s: RopeScaling) -> f32 {
    let old = s.original_max_position_embeddings as f32;
    let low_wavelen = old / s.low_freq_factor;
    let high_wavelen = old / s.high_freq_factor;
    let wavelen = 2.0 * std::f32::consts::PI / freq;
    if wavelen < high_wavelen {
        freq
    } else if wavelen > low_wavelen {
        freq / s.factor
    } else {
        let smooth = (old / wavelen - s.low_freq_factor) / (s.high_freq_factor - s.low_freq_factor);
        (1.0 - smooth) * freq / s.factor + smooth * freq
    }
}

/// Subset of a Hugging Face `config.json` for Llama-family checkpoints.
#[derive(Debug, Deserialize)]
pub(crate) struct HfLlamaConfig {
    pub hidden_size: usize,
    pub intermediate_size: usize,
    pub num_attention_heads: usize,
    pub num_hidden_layers: usize,
    pub num_key_value_heads: Option<usize>,
    pub head_dim: Option<usize>,
    pub rms_norm_eps: f32,
    #[serde(default = "default_theta")]
    pub rope_theta: f32,
    pub rope_scaling: Option<HfRopeScaling>,
    pub vocab_size: usize,
    #[serde(default)]
    pub tie_word_embeddings: bool,
    #[serde(default = "default_ctx")]
    pub max_position_embeddings: usize,
}

#[derive(Debug, Deserialize)]
pub(crate) struct HfRopeScaling {
    pub factor: f32,
    #[serde(default = "one")]
    pub low_freq_factor: f32,
    #[serde(default = "four")]
    pub high_freq_factor: f32,
    #[serde(default = "default_ctx")]
    pub original_max_position_embeddings: usize,
    pub rope_type: Option<String>,
}

fn default_theta() -> f32 {
    10_000.0
}
fn default_ctx() -> usize {
    8192
}
fn one() -> f32 {
    1.0
}
fn four() -> f32 {
    4.0
}

impl HfLlamaConfig {
    pub fn to_config(&self) -> ModelConfig {
        let rope_scaling = self.rope_scaling.as_ref().and_then(|r| {
            (r.rope_type.as_deref() == Some("llama3")).then_some(RopeScaling {
                factor: r.factor,
                low_freq_factor: r.low_freq_factor,
                high_freq_factor: r.high_freq_factor,
                original_max_position_embeddings: r.original_max_position_embeddings,
            })
        });
        ModelConfig {
            n_layers: self.num_hidden_layers,
            n_heads: self.num_attention_heads,
            n_kv_heads: self.num_key_value_heads.unwrap_or(self.num_attention_heads),
            d_model: self.hidden_size,
            d_head: self
                .head_dim
                .unwrap_or(self.hidden_size / self.num_attention_heads),
            d_mlp: self.intermediate_size,
            vocab_size: self.vocab_size,
            max_seq_len: self.max_position_embeddings,
            rms_eps: self.rms_norm_eps,
            rope_theta: self.rope_theta,
            rope_scaling,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn llama3_scaling_keeps_high_frequencies() {
        let s = RopeScaling {
            factor: 32.0,
            low_freq_factor: 1.0,
            high_freq_factor: 4.0,
            original_max_position_embeddings: 8192,
        };
        assert_eq!(scale_freq(1.0, s), 1.0);
        let slow = 1e-5;
        assert!((scale_freq(slow, s) - slow / 32.0).abs() < 1e-12);
    }
}
