// SPDX-License-Identifier: MIT OR Apache-2.0

//! Instrumented forward pass.
//!
//! Everything is computed for every position (no KV cache). Hooks fire in
//! a fixed order per layer: head z (ablate, patch, capture), head result
//! (patch, capture), attention output, MLP output, post-layer residual.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::address::{ActivationAddress, Component, HeadId};
use super::{Model, ModelConfig};
use crate::error::{Error, Result};

/// Captures and interventions applied during one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Hooks {
    pub capture: BTreeSet<ActivationAddress>,
    pub patches: BTreeMap<ActivationAddress, Vec<f32>>,
    /// Heads whose z is zeroed at every position.
    pub ablate: BTreeSet<HeadId>,
    /// `(position, delta)` added to the embedding row before layer 0.
    pub embedding_edits: Vec<(usize, Vec<f32>)>,
    pub patterns: BTreeSet<HeadId>,
}

impl Hooks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.capture.is_empty()
            && self.patches.is_empty()
            && self.ablate.is_empty()
            && self.embedding_edits.is_empty()
            && self.patterns.is_empty()
    }

    fn validate(&self, cfg: &ModelConfig, seq_len: usize) -> Result<()> {
        for a in &self.capture {
            a.validate(cfg, seq_len)?;
        }
        for (a, v) in &self.patches {
            a.validate(cfg, seq_len)?;
            if v.len() != a.width(cfg) {
                return Err(Error::Shape {
                    expected: a.width(cfg),
                    got: v.len(),
                });
            }
        }
        for h in self.ablate.iter().chain(&self.patterns) {
            if h.layer >= cfg.n_layers || h.head >= cfg.n_heads {
                return Err(Error::Address(format!("head {h} out of range")));
            }
        }
        for (p, d) in &self.embedding_edits {
            if *p >= seq_len {
                return Err(Error::Index {
                    index: *p,
                    len: seq_len,
                });
            }
            if d.len() != cfg.d_model {
                return Err(Error::Shape {
                    expected: cfg.d_model,
                    got: d.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Logits at the final position.
    pub logits: Vec<f32>,
    pub captures: BTreeMap<ActivationAddress, Vec<f32>>,
    /// Post-softmax attention patterns, `[seq, seq]`.
    pub patterns: BTreeMap<HeadId, Array2<f32>>,
}

pub(crate) fn rms_norm_rows(x: &Array2<f32>, w: &Array1<f32>, eps: f32) -> Array2<f32> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let ms = row.iter().map(|v| v * v).sum::<f32>() / row.len() as f32;
        let inv = 1.0 / (ms + eps).sqrt();
        row.zip_mut_with(w, |v, g| *v *= inv * g);
    }
    out
}

pub(crate) fn rms_norm_vec(x: ArrayView1<f32>, w: &Array1<f32>, eps: f32) -> Array1<f32> {
    let ms = x.iter().map(|v| v * v).sum::<f32>() / x.len() as f32;
    let inv = 1.0 / (ms + eps).sqrt();
    x.iter().zip(w).map(|(v, g)| v * inv * g).collect()
}

/// Rotate-half RoPE applied in place to each head block of `x` (`[seq, n * d_head]`).
fn apply_rope(x: &mut Array2<f32>, n_heads: usize, d_head: usize, inv_freq: &[f32]) {
    let half = d_head / 2;
    for (pos, mut row) in x.rows_mut().into_iter().enumerate() {
        for h in 0..n_heads {
            let base = h * d_head;
            for (i, &f) in inv_freq.iter().enumerate() {
                let (sin, cos) = (pos as f32 * f).sin_cos();
                let a = row[base + i];
                let b = row[base + i + half];
                row[base + i] = a * cos - b * sin;
                row[base + i + half] = b * cos + a * sin;
            }
        }
    }
}

fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

fn apply_patch(mat: &mut Array2<f32>, hooks: &Hooks, addr: ActivationAddress) {
    if let Some(v) = hooks.patches.get(&addr) {
        mat.row_mut(addr.position)
            .assign(&ArrayView1::from(v.as_slice()));
    }
}

impl Model {
    /// Full forward pass over `tokens` with the given hooks.
    pub fn run(&self, tokens: &[u32], hooks: &Hooks) -> Result<RunOutput> {
        let cfg = &self.config;
        let w = &self.weights;
        let t = tokens.len();
        if t == 0 {
            return Err(Error::Argument("empty token sequence".into()));
        }
        if t > cfg.max_seq_len {
            return Err(Error::Length {
                len: t,
                max: cfg.max_seq_len,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::Index {
                index: bad as usize,
                len: cfg.vocab_size,
            });
        }
        hooks.validate(cfg, t)?;

        let mut captures = BTreeMap::new();
        let mut patterns = BTreeMap::new();
        let capture_rows = |mat: &Array2<f32>,
                                layer: usize,
                                component: Component,
                                head: Option<usize>,
                                out: &mut BTreeMap<ActivationAddress, Vec<f32>>| {
            for a in hooks.capture.iter().filter(|a| {
                a.layer == layer && a.component == component && a.head == head
            }) {
                out.insert(*a, mat.row(a.position).to_vec());
            }
        };

        let mut x = Array2::<f32>::zeros((t, cfg.d_model));
        for (i, &id) in tokens.iter().enumerate() {
            x.row_mut(i).assign(&w.embed.row(id as usize));
        }
        for (p, d) in &hooks.embedding_edits {
            let mut row = x.row_mut(*p);
            row.zip_mut_with(&ArrayView1::from(d.as_slice()), |a, b| *a += b);
        }
        for p in 0..t {
            apply_patch(&mut x, hooks, ActivationAddress::layer_scoped(0, Component::Embedding, p));
        }
        capture_rows(&x, 0, Component::Embedding, None, &mut captures);

        let inv_freq = cfg.inv_freq();
        let dh = cfg.d_head;
        let scale = 1.0 / (dh as f32).sqrt();

        for (li, lw) in w.layers.iter().enumerate() {
            let h = rms_norm_rows(&x, &lw.attn_norm, cfg.rms_eps);
            let mut q = h.dot(&lw.wq.t());
            let mut k = h.dot(&lw.wk.t());
            let v = h.dot(&lw.wv.t());
            apply_rope(&mut q, cfg.n_heads, dh, &inv_freq);
            apply_rope(&mut k, cfg.n_kv_heads, dh, &inv_freq);

            let mut attn_out = Array2::<f32>::zeros((t, cfg.d_model));
            for head in 0..cfg.n_heads {
                let id = HeadId::new(li, head);
                let g = cfg.kv_group(head);
                let qh = q.slice(s![.., head * dh..(head + 1) * dh]);
                let kh = k.slice(s![.., g * dh..(g + 1) * dh]);
                let vh = v.slice(s![.., g * dh..(g + 1) * dh]);

                let mut scores = qh.dot(&kh.t());
                for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
                    let max = row
                        .iter()
                        .take(i + 1)
                        .fold(f32::NEG_INFINITY, |m, &s| m.max(s * scale));
                    let mut sum = 0.0;
                    for (j, s) in row.iter_mut().enumerate() {
                        *s = if j <= i { (*s * scale - max).exp() } else { 0.0 };
                        sum += *s;
                    }
                    row.mapv_inplace(|s| s / sum);
                }
                let mut z = if hooks.ablate.contains(&id) {
                    Array2::zeros((t, dh))
                } else {
                    scores.dot(&vh)
                };
                if hooks.patterns.contains(&id) {
                    patterns.insert(id, scores);
                }
                for p in 0..t {
                    apply_patch(&mut z, hooks, ActivationAddress::head_z(li, head, p));
                }
                capture_rows(&z, li, Component::HeadZ, Some(head), &mut captures);

                let wo_h = lw.wo.slice(s![.., head * dh..(head + 1) * dh]);
                let mut result = z.dot(&wo_h.t());
                for p in 0..t {
                    apply_patch(&mut result, hooks, ActivationAddress::head_result(li, head, p));
                }
                capture_rows(&result, li, Component::HeadResult, Some(head), &mut captures);
                attn_out += &result;
            }
            if let Some(b) = &lw.o_bias {
                attn_out += b;
            }
            for p in 0..t {
                apply_patch(&mut attn_out, hooks, ActivationAddress::layer_scoped(li, Component::AttnOut, p));
            }
            capture_rows(&attn_out, li, Component::AttnOut, None, &mut captures);
            x += &attn_out;

            let h2 = rms_norm_rows(&x, &lw.mlp_norm, cfg.rms_eps);
            let mut gate = h2.dot(&lw.w_gate.t());
            let up = h2.dot(&lw.w_up.t());
            gate.zip_mut_with(&up, |g, u| *g = silu(*g) * u);
            let mut mlp_out = gate.dot(&lw.w_down.t());
            for p in 0..t {
                apply_patch(&mut mlp_out, hooks, ActivationAddress::layer_scoped(li, Component::MlpOut, p));
            }
            capture_rows(&mlp_out, li, Component::MlpOut, None, &mut captures);
            x += &mlp_out;

            for p in 0..t {
                apply_patch(&mut x, hooks, ActivationAddress::layer_scoped(li, Component::ResidPost, p));
            }
            capture_rows(&x, li, Component::ResidPost, None, &mut captures);
        }

        let last = x.index_axis(Axis(0), t - 1);
        let logits = self.lens_logits_view(last);
        Ok(RunOutput {
            logits,
            captures,
            patterns,
        })
    }

    /// Final norm followed by unembedding.
    pub(crate) fn lens_logits_view(&self, v: ArrayView1<f32>) -> Vec<f32> {
        let normed = rms_norm_vec(v, &self.weights.final_norm, self.config.rms_eps);
        self.weights.unembed().dot(&normed).to_vec()
    }

    /// Greedy continuation of `tokens` for `n` steps with `hooks` applied at
    /// every step. Returns only the generated ids.
    pub fn generate(&self, tokens: &[u32], hooks: &Hooks, n: usize) -> Result<Vec<u32>> {
        let mut seq = tokens.to_vec();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            if seq.len() >= self.config.max_seq_len {
                break;
            }
            let run = self.run(&seq, hooks)?;
            let next = argmax(&run.logits);
            out.push(next);
            seq.push(next);
        }
        Ok(out)
    }
}

/// Index of the largest logit; lowest index wins ties.
pub fn argmax(logits: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// Indices of the `k` largest values, descending, ties by index ascending.
pub fn top_k(values: &[f32], k: usize) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..values.len() as u32).collect();
    idx.sort_by(|&a, &b| {
        values[b as usize]
            .total_cmp(&values[a as usize])
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}
