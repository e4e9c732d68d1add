// SPDX-License-Identifier: MIT OR Apache-2.0

use ndarray::{Array1, Array2};

use super::ModelConfig;
use crate::error::{Error, Result};

/// Linear weights are stored `[out, in]`, matching checkpoint layout.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub attn_norm: Array1<f32>,
    /// `[n_heads * d_head, d_model]`
    pub wq: Array2<f32>,
    /// `[n_kv_heads * d_head, d_model]`
    pub wk: Array2<f32>,
    /// `[n_kv_heads * d_head, d_model]`
    pub wv: Array2<f32>,
    /// `[d_model, n_heads * d_head]`
    pub wo: Array2<f32>,
    pub o_bias: Option<Array1<f32>>,
    pub mlp_norm: Array1<f32>,
    /// `[d_mlp, d_model]`
    pub w_gate: Array2<f32>,
    /// `[d_mlp, d_model]`
    pub w_up: Array2<f32>,
    /// `[d_model, d_mlp]`
    pub w_down: Array2<f32>,
}

#[derive(Debug, Clone)]
pub struct ModelWeights {
    /// `[vocab, d_model]`
    pub embed: Array2<f32>,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Array1<f32>,
    /// `[vocab, d_model]`; `None` when tied to `embed`.
    pub unembed: Option<Array2<f32>>,
}

impl ModelWeights {
    pub fn unembed(&self) -> &Array2<f32> {
        self.unembed.as_ref().unwrap_or(&self.embed)
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let check = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Load(format!("{name}: shape {got:?}, expected {want:?}")))
            }
        };
        let (d, hd, kvd) = (cfg.d_model, cfg.n_heads * cfg.d_head, cfg.n_kv_heads * cfg.d_head);
        if !cfg.n_heads.is_multiple_of(cfg.n_kv_heads) || !cfg.d_head.is_multiple_of(2) {
            return Err(Error::Load("n_heads must be a multiple of n_kv_heads and d_head even".into()));
        }
        check("embed", self.embed.dim(), (cfg.vocab_size, d))?;
        check("unembed", self.unembed().dim(), (cfg.vocab_size, d))?;
        if self.layers.len() != cfg.n_layers || self.final_norm.len() != d {
            return Err(Error::Load("layer count or final norm size mismatch".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            check(&format!("layers.{i}.wq"), l.wq.dim(), (hd, d))?;
            check(&format!("layers.{i}.wk"), l.wk.dim(), (kvd, d))?;
            check(&format!("layers.{i}.wv"), l.wv.dim(), (kvd, d))?;
            check(&format!("layers.{i}.wo"), l.wo.dim(), (d, hd))?;
            check(&format!("layers.{i}.w_gate"), l.w_gate.dim(), (cfg.d_mlp, d))?;
            check(&format!("layers.{i}.w_up"), l.w_up.dim(), (cfg.d_mlp, d))?;
            check(&format!("layers.{i}.w_down"), l.w_down.dim(), (d, cfg.d_mlp))?;
            if l.attn_norm.len() != d || l.mlp_norm.len() != d {
                return Err(Error::Load(format!("layers.{i}: norm size mismatch")));
            }
            if l.o_bias.as_ref().is_some_and(|b| b.len() != d) {
                return Err(Error::Load(format!("layers.{i}: o_bias size mismatch")));
            }
        }
        Ok(())
    }
}
