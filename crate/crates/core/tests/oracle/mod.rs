// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense f64 reference forward pass written directly from the weight
//! tensors, sharing no code with the library's forward.

#![allow(dead_code)]

use std::collections::BTreeMap;

use phonolens::model::Model;

pub struct Trace {
    pub logits: Vec<f64>,
    /// `(layer, head, position)` → z.
    pub z: BTreeMap<(usize, usize, usize), Vec<f64>>,
    /// `(layer, position)` → attention output (bias included).
    pub attn_out: BTreeMap<(usize, usize), Vec<f64>>,
    pub final_resid: Vec<f64>,
}

fn rms(x: &[f64], g: &[f32], eps: f64) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (ms + eps).sqrt();
    x.iter().zip(g).map(|(v, g)| v * inv * f64::from(*g)).collect()
}

fn matvec(w: &ndarray::Array2<f32>, x: &[f64]) -> Vec<f64> {
    w.rows()
        .into_iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| f64::from(*a) * b).sum())
        .collect()
}

fn rotate(v: &mut [f64], pos: usize, theta: f64) {
    let d = v.len();
    let half = d / 2;
    for i in 0..half {
        let f = theta.powf(-(2.0 * i as f64) / d as f64);
        let (s, c) = (pos as f64 * f).sin_cos();
        let (a, b) = (v[i], v[i + half]);
        v[i] = a * c - b * s;
        v[i + half] = b * c + a * s;
    }
}

/// Called with `(layer, head, position, z)`.
pub type ZPatch<'a> = dyn Fn(usize, usize, usize, &mut Vec<f64>) + 'a;

/// Forward pass; `patch_z` may overwrite any head's z in place.
pub fn forward(
    model: &Model,
    tokens: &[u32],
    patch_z: &ZPatch<'_>,
) -> Trace {
    let c = &model.config;
    assert!(c.rope_scaling.is_none(), "oracle implements unscaled rotary only");
    let w = &model.weights;
    let eps = f64::from(c.rms_eps);
    let theta = f64::from(c.rope_theta);
    let (t, d, dh) = (tokens.len(), c.d_model, c.d_head);
    let mut x: Vec<Vec<f64>> = tokens
        .iter()
        .map(|&id| w.embed.row(id as usize).iter().map(|v| f64::from(*v)).collect())
        .collect();
    let mut z_all = BTreeMap::new();
    let mut attn_all = BTreeMap::new();
    for (l, lw) in w.layers.iter().enumerate() {
        let g: Vec<f32> = lw.attn_norm.to_vec();
        let h: Vec<Vec<f64>> = x.iter().map(|r| rms(r, &g, eps)).collect();
        let q: Vec<Vec<f64>> = h.iter().map(|r| matvec(&lw.wq, r)).collect();
        let k: Vec<Vec<f64>> = h.iter().map(|r| matvec(&lw.wk, r)).collect();
        let v: Vec<Vec<f64>> = h.iter().map(|r| matvec(&lw.wv, r)).collect();
        let group = c.n_heads / c.n_kv_heads;
        let mut concat = vec![vec![0.0; c.n_heads * dh]; t];
        for head in 0..c.n_heads {
            let kv = head / group;
            let qh: Vec<Vec<f64>> = (0..t)
                .map(|p| {
                    let mut s = q[p][head * dh..(head + 1) * dh].to_vec();
                    rotate(&mut s, p, theta);
                    s
                })
                .collect();
            let kh: Vec<Vec<f64>> = (0..t)
                .map(|p| {
                    let mut s = k[p][kv * dh..(kv + 1) * dh].to_vec();
                    rotate(&mut s, p, theta);
                    s
                })
                .collect();
            for i in 0..t {
                let scores: Vec<f64> = (0..=i)
                    .map(|j| qh[i].iter().zip(&kh[j]).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let sum: f64 = e.iter().sum();
                let mut z = vec![0.0; dh];
                for (j, ej) in e.iter().enumerate() {
                    for r in 0..dh {
                        z[r] += ej / sum * v[j][kv * dh + r];
                    }
                }
                patch_z(l, head, i, &mut z);
                concat[i][head * dh..(head + 1) * dh].copy_from_slice(&z);
                z_all.insert((l, head, i), z);
            }
        }
        for i in 0..t {
            let mut a = matvec(&lw.wo, &concat[i]);
            if let Some(b) = &lw.o_bias {
                for (x, b) in a.iter_mut().zip(b) {
                    *x += f64::from(*b);
                }
            }
            for r in 0..d {
                x[i][r] += a[r];
            }
            attn_all.insert((l, i), a);
        }
        let g2: Vec<f32> = lw.mlp_norm.to_vec();
        for row in x.iter_mut() {
            let h = rms(row, &g2, eps);
            let gate = matvec(&lw.w_gate, &h);
            let up = matvec(&lw.w_up, &h);
            let act: Vec<f64> = gate.iter().zip(&up).map(|(g, u)| g / (1.0 + (-g).exp()) * u).collect();
            let out = matvec(&lw.w_down, &act);
            for (r, o) in row.iter_mut().zip(out) {
                *r += o;
            }
        }
    }
    let last = x[t - 1].clone();
    Trace {
        logits: lens(model, &last),
        z: z_all,
        attn_out: attn_all,
        final_resid: last,
    }
}

/// Final norm and unembedding of a residual vector.
pub fn lens(model: &Model, v: &[f64]) -> Vec<f64> {
    let g: Vec<f32> = model.weights.final_norm.to_vec();
    let h = rms(v, &g, f64::from(model.config.rms_eps));
    matvec(model.weights.unembed(), &h)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
