// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multi-hot linear phoneme probe on raw token embeddings.
//!
//! One linear layer with an independent sigmoid per phoneme, trained with
//! mean binary cross-entropy plus an L2 penalty using Adam. Row `i` of the
//! fitted weight matrix is the latent direction of inventory phoneme `i`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_f32_blob, sha256_hex, write_f32_blob, Envelope};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::par;
use crate::phonetics::{PhonemeInventory, PronunciationLexicon};

pub const MIN_PROBE_WORDS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Which rows an evaluation covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSel {
    Train,
    Test,
    All,
}

impl SplitSel {
    fn admits(self, s: Split) -> bool {
        match self {
            SplitSel::All => true,
            SplitSel::Train => s == Split::Train,
            SplitSel::Test => s == Split::Test,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub word: String,
    pub embedding: Vec<f32>,
    pub label: Vec<u8>,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeDataset {
    pub rows: Vec<ProbeRow>,
    pub d_model: usize,
    pub n_labels: usize,
    pub split_seed: u64,
}

/// Deterministic ~90/10 split from a hash of `(seed, word)`.
pub fn split_for(word: &str, seed: u64) -> Split {
    let mut buf = seed.to_le_bytes().to_vec();
    buf.extend_from_slice(word.as_bytes());
    let hex = sha256_hex(&buf);
    let v = u64::from_str_radix(&hex[..16], 16).expect("hex digest");
    if v.is_multiple_of(10) {
        Split::Test
    } else {
        Split::Train
    }
}

impl ProbeDataset {
    /// Build from explicit `(word, embedding, label)` triples.
    pub fn from_rows(rows: Vec<(String, Vec<f32>, Vec<u8>)>, split_seed: u64) -> Result<Self> {
        let first = rows
            .first()
            .ok_or(Error::InsufficientData { got: 0, need: 1 })?;
        let (d_model, n_labels) = (first.1.len(), first.2.len());
        let rows = rows
            .into_iter()
            .map(|(word, embedding, label)| {
                if embedding.len() != d_model || label.len() != n_labels {
                    return Err(Error::Shape {
                        expected: d_model,
                        got: embedding.len(),
                    });
                }
                let split = split_for(&word, split_seed);
                Ok(ProbeRow {
                    word,
                    embedding,
                    label,
                    split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            d_model,
            n_labels,
            split_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, sel: SplitSel) -> usize {
        self.rows.iter().filter(|r| sel.admits(r.split)).count()
    }

    fn matrices(&self, sel: SplitSel) -> (Array2<f32>, Array2<f32>) {
        let rows: Vec<&ProbeRow> = self.rows.iter().filter(|r| sel.admits(r.split)).collect();
        let mut x = Array2::zeros((rows.len(), self.d_model));
        let mut y = Array2::zeros((rows.len(), self.n_labels));
        for (i, r) in rows.iter().enumerate() {
            x.row_mut(i).assign(&ArrayView1::from(r.embedding.as_slice()));
            for (j, &b) in r.label.iter().enumerate() {
                y[[i, j]] = f32::from(b);
            }
        }
        (x, y)
    }
}

/// One row per single-token lexicon word: its raw embedding row and its
/// multi-hot label. Requires at least [`MIN_PROBE_WORDS`] words.
pub fn build_dataset(model: &Model, lexicon: &PronunciationLexicon, split_seed: u64) -> Result<ProbeDataset> {
    build_dataset_with_min(model, lexicon, split_seed, MIN_PROBE_WORDS)
}

pub fn build_dataset_with_min(
    model: &Model,
    lexicon: &PronunciationLexicon,
    split_seed: u64,
    min_words: usize,
) -> Result<ProbeDataset> {
    let words: Vec<&str> = lexicon.words().collect();
    let rows: Vec<(String, Vec<f32>, Vec<u8>)> = par::map(&words, |w| {
        let id = model.word_token(w)?;
        let emb = model.weights.embed.row(id as usize).to_vec();
        let label = lexicon.multihot(w).ok()?;
        Some((w.to_string(), emb, label))
    })
    .into_iter()
    .flatten()
    .collect();
    if rows.len() < min_words.max(1) {
        return Err(Error::InsufficientData {
            got: rows.len(),
            need: min_words.max(1),
        });
    }
    ProbeDataset::from_rows(rows, split_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub threshold: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-2,
            l2: 1e-4,
            threshold: 0.5,
            batch_size: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub split_seed: u64,
    pub config: ProbeConfig,
    pub final_loss: f64,
}

impl TrainingMeta {
    /// Metadata for hand-constructed probes.
    pub fn planted() -> Self {
        Self {
            split_seed: 0,
            config: ProbeConfig {
                epochs: 0,
                ..ProbeConfig::default()
            },
            final_loss: 0.0,
        }
    }
}

/// Fitted probe: `[n_phonemes, d_model]` weights and bias in inventory order.
#[derive(Debug, Clone)]
pub struct ProbeMatrix {
    pub weights: Array2<f32>,
    pub bias: Array1<f32>,
    pub inventory_hash: String,
    pub symbols: Vec<String>,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct ProbeFileMeta {
    inventory_hash: String,
    symbols: Vec<String>,
    d_model: usize,
    meta: TrainingMeta,
}

impl ProbeMatrix {
    pub fn new(weights: Array2<f32>, bias: Array1<f32>, inv: &PhonemeInventory, meta: TrainingMeta) -> Self {
        Self {
            weights,
            bias,
            inventory_hash: inv.hash(),
            symbols: inv.phonemes().iter().map(|p| p.symbol.clone()).collect(),
            meta,
        }
    }

    pub fn d_model(&self) -> usize {
        self.weights.ncols()
    }

    pub fn threshold(&self) -> f64 {
        self.meta.config.threshold
    }

    /// Probe row of `symbol`: its latent phoneme direction.
    pub fn phoneme_vector(&self, symbol: &str) -> Result<Vec<f32>> {
        let i = self
            .symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| Error::NotFound(format!("phoneme /{symbol}/ not in probe")))?;
        Ok(self.weights.row(i).to_vec())
    }

    /// Per-phoneme probabilities for one embedding.
    pub fn predict_proba(&self, embedding: &[f32]) -> Vec<f64> {
        let z = self.weights.dot(&ArrayView1::from(embedding)) + &self.bias;
        z.iter().map(|&v| sigmoid(f64::from(v))).collect()
    }

    /// Save as `<stem>.json` (metadata) + `<stem>.bin` (weights then bias).
    pub fn save(&self, stem: &Path, config_hash: &str) -> Result<()> {
        let meta = ProbeFileMeta {
            inventory_hash: self.inventory_hash.clone(),
            symbols: self.symbols.clone(),
            d_model: self.d_model(),
            meta: self.meta.clone(),
        };
        Envelope::new("probe", config_hash, self.meta.config.seed, meta)
            .save(&stem.with_extension("json"))?;
        let mut blob: Vec<f32> = self.weights.iter().copied().collect();
        blob.extend(self.bias.iter().copied());
        write_f32_blob(&stem.with_extension("bin"), &blob)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let env: Envelope<ProbeFileMeta> = Envelope::load(&stem.with_extension("json"))?;
        let m = env.payload;
        let blob = read_f32_blob(&stem.with_extension("bin"))?;
        let n = m.symbols.len();
        if blob.len() != n * m.d_model + n {
            return Err(Error::Shape {
                expected: n * m.d_model + n,
                got: blob.len(),
            });
        }
        let weights = Array2::from_shape_vec((n, m.d_model), blob[..n * m.d_model].to_vec())
            .expect("length checked");
        let bias = Array1::from_vec(blob[n * m.d_model..].to_vec());
        Ok(Self {
            weights,
            bias,
            inventory_hash: m.inventory_hash,
            symbols: m.symbols,
            meta: m.meta,
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean BCE over all entries, computed from logits for stability.
fn bce_from_logits(z: &Array2<f32>, y: &Array2<f32>) -> f64 {
    let n = z.len().max(1) as f64;
    z.iter()
        .zip(y.iter())
        .map(|(&z, &y)| {
            let z = f64::from(z);
            z.max(0.0) - z * f64::from(y) + (-z.abs()).exp().ln_1p()
        })
        .sum::<f64>()
        / n
}

struct Adam {
    m: Array2<f64>,
    v: Array2<f64>,
    t: i32,
}

impl Adam {
    fn new(shape: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            t: 0,
        }
    }

    fn step(&mut self, param: &mut Array2<f64>, grad: &Array2<f64>, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        ndarray::Zip::from(param)
            .and(&mut self.m)
            .and(&mut self.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            });
    }
}

/// Fit the probe on the train split.
pub fn train_probe(
    dataset: &ProbeDataset,
    inventory: &PhonemeInventory,
    config: &ProbeConfig,
) -> Result<ProbeMatrix> {
    if dataset.n_labels != inventory.len() {
        return Err(Error::Shape {
            expected: inventory.len(),
            got: dataset.n_labels,
        });
    }
    let (x, y) = dataset.matrices(SplitSel::Train);
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InsufficientData { got: 0, need: 1 });
    }
    let (d, k) = (dataset.d_model, dataset.n_labels);
    // Weights and bias packed as one [k, d + 1] parameter.
    let mut param = Array2::<f64>::zeros((k, d + 1));
    let mut adam = Adam::new((k, d + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let bs = config.batch_size.clamp(1, n);
    let mut loss = f64::NAN;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(bs) {
            let xb = x.select(Axis(0), batch);
            let yb = y.select(Axis(0), batch);
            let w = param.slice(ndarray::s![.., ..d]).mapv(|v| v as f32);
            let b = param.column(d).mapv(|v| v as f32);
            let z = xb.dot(&w.t()) + &b;
            epoch_loss += bce_from_logits(&z, &yb) * batch.len() as f64;
            let scale = 1.0 / (batch.len() * k) as f64;
            let g = ndarray::Zip::from(&z)
                .and(&yb)
                .map_collect(|&z, &y| (sigmoid(f64::from(z)) - f64::from(y)) * scale);
            let xb64 = xb.mapv(f64::from);
            let mut grad = Array2::<f64>::zeros((k, d + 1));
            grad.slice_mut(ndarray::s![.., ..d])
                .assign(&(g.t().dot(&xb64) + &param.slice(ndarray::s![.., ..d]).mapv(|v| v * config.l2)));
            grad.column_mut(d).assign(&g.sum_axis(Axis(0)));
            adam.step(&mut param, &grad, config.learning_rate);
        }
        loss = epoch_loss / n as f64;
        if !loss.is_finite() || param.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training { epoch, loss });
        }
    }
    let weights = param.slice(ndarray::s![.., ..d]).mapv(|v| v as f32);
    let bias = param.column(d).mapv(|v| v as f32);
    Ok(ProbeMatrix::new(
        weights,
        bias,
        inventory,
        TrainingMeta {
            split_seed: dataset.split_seed,
            config: config.clone(),
            final_loss: loss,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub split: SplitSel,
    pub n: usize,
    /// Fraction of words whose full thresholded prediction equals the label.
    pub exact_match: f64,
    pub per_phoneme_f1: Vec<f64>,
    pub per_phoneme_recall: Vec<f64>,
}

pub fn evaluate_probe(probe: &ProbeMatrix, dataset: &ProbeDataset, split: SplitSel) -> ProbeMetrics {
    evaluate_at_threshold(probe, dataset, split, probe.threshold())
}

/// Evaluation at an explicit threshold. F1 and recall are 1.0 for a phoneme
/// with no positives and no predictions.
pub fn evaluate_at_threshold(
    probe: &ProbeMatrix,
    dataset: &ProbeDataset,
    split: SplitSel,
    threshold: f64,
) -> ProbeMetrics {
    let rows: Vec<&ProbeRow> = dataset.rows.iter().filter(|r| split.admits(r.split)).collect();
    let k = dataset.n_labels;
    // (exact, tp, fp, fn) per row
    let per_row = par::map(&rows, |r| {
        let p = probe.predict_proba(&r.embedding);
        let mut counts = vec![[0u32; 3]; k];
        let mut exact = true;
        for j in 0..k {
            let pred = p[j] >= threshold;
            let truth = r.label[j] == 1;
            exact &= pred == truth;
            match (pred, truth) {
                (true, true) => counts[j][0] += 1,
                (true, false) => counts[j][1] += 1,
                (false, true) => counts[j][2] += 1,
                _ => {}
            }
        }
        (exact, counts)
    });
    let mut totals = vec![[0u64; 3]; k];
    let mut exact = 0usize;
    for (e, c) in &per_row {
        exact += usize::from(*e);
        for j in 0..k {
            for m in 0..3 {
                totals[j][m] += u64::from(c[j][m]);
            }
        }
    }
    let f1 = totals
        .iter()
        .map(|[tp, fp, fnn]| {
            if tp + fp + fnn == 0 {
                1.0
            } else {
                2.0 * *tp as f64 / (2 * tp + fp + fnn) as f64
            }
        })
        .collect();
    let recall = totals
        .iter()
        .map(|[tp, _, fnn]| if tp + fnn == 0 { 1.0 } else { *tp as f64 / (tp + fnn) as f64 })
        .collect();
    ProbeMetrics {
        split,
        n: rows.len(),
        exact_match: if rows.is_empty() { 0.0 } else { exact as f64 / rows.len() as f64 },
        per_phoneme_f1: f1,
        per_phoneme_recall: recall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub train: ProbeMetrics,
    pub test: ProbeMetrics,
}

/// Replace every embedding with a draw from a per-dimension Gaussian matched
/// to the dataset's embedding moments, retrain with the same config, and
/// evaluate on both splits.
pub fn random_embedding_baseline(
    dataset: &ProbeDataset,
    inventory: &PhonemeInventory,
    seed: u64,
    config: &ProbeConfig,
) -> Result<(ProbeMatrix, BaselineReport)> {
    let (x, _) = dataset.matrices(SplitSel::All);
    let mean = x.mean_axis(Axis(0)).ok_or(Error::InsufficientData { got: 0, need: 1 })?;
    let std = x.std_axis(Axis(0), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normals: Vec<Normal<f32>> = mean
        .iter()
        .zip(std.iter())
        .map(|(&m, &s)| Normal::new(m, s.max(f32::MIN_POSITIVE)).expect("finite moments"))
        .collect();
    let mut random = dataset.clone();
    for row in &mut random.rows {
        for (v, n) in row.embedding.iter_mut().zip(&normals) {
            *v = n.sample(&mut rng);
        }
    }
    let probe = train_probe(&random, inventory, config)?;
    let report = BaselineReport {
        train: evaluate_probe(&probe, &random, SplitSel::Train),
        test: evaluate_probe(&probe, &random, SplitSel::Test),
    };
    Ok((probe, report))
}

/// Synthetic dataset whose embeddings are an exact linear image of the
/// labels: `embedding = Mᵀ · label` for a Gaussian `M` of shape
/// `[n_labels, d_model]`. Each phoneme is present with probability `p`.
pub fn planted_dataset(n_words: usize, n_labels: usize, d_model: usize, p: f64, seed: u64) -> Result<ProbeDataset> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixing = Array2::from_shape_fn((n_labels, d_model), |_| {
        rand_distr::StandardNormal.sample(&mut rng)
    });
    let rows = (0..n_words)
        .map(|i| {
            let label: Vec<u8> = (0..n_labels).map(|_| u8::from(rng.random_bool(p))).collect();
            let y = Array1::from_iter(label.iter().map(|&b| f32::from(b)));
            (format!("w{i}"), mixing.t().dot(&y).to_vec(), label)
        })
        .collect();
    ProbeDataset::from_rows(rows, seed)
}
