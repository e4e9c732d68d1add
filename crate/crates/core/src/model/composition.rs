// SPDX-License-Identifier: MIT OR Apache-2.0

//! Weights-only composition scores between attention heads.
//!
//! Every QK and OV circuit has rank at most `d_head`, so each is kept as a
//! factor pair `left · right` and Frobenius norms are taken through the
//! small Gram matrices instead of materializing `d_model × d_model` products.
//! The input RMSNorm gain of each layer is folded into its Q, K and V weights.
//! Rotary position encoding is ignored.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{HeadId, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompositionMode {
    Q,
    K,
    V,
}

impl std::str::FromStr for CompositionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "Q" => Ok(Self::Q),
            "K" => Ok(Self::K),
            "V" => Ok(Self::V),
            _ => Err(Error::Argument(format!("unknown composition mode {s:?}"))),
        }
    }
}

/// `left · right` with `left: [d, r]`, `right: [r, d]`.
struct Factored {
    left: Array2<f64>,
    right: Array2<f64>,
}

impl Factored {
    fn frob_sq(&self) -> f64 {
        let gl = self.left.t().dot(&self.left);
        let gr = self.right.dot(&self.right.t());
        (&gl * &gr).sum()
    }

    /// `‖self · other‖_F²` via `tr(Mᵀ G_L M G_R)` with `M = right · other.left`.
    fn product_frob_sq(&self, other: &Factored) -> f64 {
        let m = self.right.dot(&other.left);
        let gl = self.left.t().dot(&self.left);
        let gr = other.right.dot(&other.right.t());
        let p = gl.dot(&m);
        let q = m.dot(&gr);
        (&p * &q).sum()
    }
}

fn to_f64(a: ndarray::ArrayView2<f32>) -> Array2<f64> {
    a.mapv(f64::from)
}

fn scale_cols(mut a: Array2<f64>, g: &Array1<f32>) -> Array2<f64> {
    for mut row in a.rows_mut() {
        row.zip_mut_with(g, |v, &s| *v *= f64::from(s));
    }
    a
}

fn head_rows(model: &Model, w: &Array2<f32>, block: usize) -> Array2<f64> {
    let dh = model.config.d_head;
    to_f64(w.slice(s![block * dh..(block + 1) * dh, ..]))
}

fn ov(model: &Model, head: HeadId) -> Factored {
    let lw = &model.weights.layers[head.layer];
    let g = model.config.kv_group(head.head);
    let dh = model.config.d_head;
    Factored {
        left: to_f64(lw.wo.slice(s![.., head.head * dh..(head.head + 1) * dh])),
        right: scale_cols(head_rows(model, &lw.wv, g), &lw.attn_norm),
    }
}

/// `W_Q_hᵀ W_K_g` with the norm gain on both sides; `transpose` gives `W_QKᵀ`.
fn qk(model: &Model, head: HeadId, transpose: bool) -> Factored {
    let lw = &model.weights.layers[head.layer];
    let g = model.config.kv_group(head.head);
    let q = scale_cols(head_rows(model, &lw.wq, head.head), &lw.attn_norm);
    let k = scale_cols(head_rows(model, &lw.wk, g), &lw.attn_norm);
    let (a, b) = if transpose { (k, q) } else { (q, k) };
    Factored {
        left: a.t().to_owned(),
        right: b,
    }
}

/// `‖A · W_OV(up)‖_F / (‖A‖_F ‖W_OV(up)‖_F)`, where `A` is the downstream
/// head's `W_QKᵀ` (Q), `W_QK` (K) or `W_OV` (V). Zero when either factor
/// vanishes.
pub fn composition_score(
    model: &Model,
    up: HeadId,
    down: HeadId,
    mode: CompositionMode,
) -> Result<f64> {
    model.check_head(up)?;
    model.check_head(down)?;
    if up.layer >= down.layer {
        return Err(Error::Argument(format!(
            "upstream {up} must precede downstream {down}"
        )));
    }
    let up_ov = ov(model, up);
    let a = match mode {
        CompositionMode::Q => qk(model, down, true),
        CompositionMode::K => qk(model, down, false),
        CompositionMode::V => ov(model, down),
    };
    let denom = (a.frob_sq() * up_ov.frob_sq()).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let num = a.product_frob_sq(&up_ov).max(0.0).sqrt();
    Ok((num / denom).clamp(0.0, 1.0))
}

impl Model {
    pub fn composition_score(&self, up: HeadId, down: HeadId, mode: CompositionMode) -> Result<f64> {
        composition_score(self, up, down, mode)
    }
}
