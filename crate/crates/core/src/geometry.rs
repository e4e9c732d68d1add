// SPDX-License-Identifier: MIT OR Apache-2.0

//! PCA geometry of head result vectors and of probe phoneme vectors seen
//! through that PCA.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{cache_key, read_f32_blob, write_f32_blob, Envelope};
use crate::error::{Error, Result};
use crate::head_analysis::{result_vector_for_word, word_list_hash};
use crate::interventions::RHYME_TEMPLATE;
use crate::model::{HeadId, Model};
use crate::par;
use crate::phonetics::{Backness, PhonemeInventory, PronunciationLexicon};
use crate::probe::ProbeMatrix;

pub const DEFAULT_COMPONENTS: usize = 8;
pub const OVERLAY_SCALE: f64 = 25.0;
pub const OVERLAY_SHIFT: f64 = 8.0;

/// Result vectors of one head, one row per successfully processed word.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultMatrix {
    pub head: HeadId,
    pub words: Vec<String>,
    pub rows: Array2<f32>,
    pub failed: Vec<(String, String)>,
    pub word_list_hash: String,
}

#[derive(Serialize, Deserialize)]
struct ResultMatrixMeta {
    head: HeadId,
    words: Vec<String>,
    failed: Vec<(String, String)>,
    word_list_hash: String,
    d_model: usize,
}

impl ResultMatrix {
    pub fn save(&self, stem: &Path, config_hash: &str) -> Result<()> {
        let meta = ResultMatrixMeta {
            head: self.head,
            words: self.words.clone(),
            failed: self.failed.clone(),
            word_list_hash: self.word_list_hash.clone(),
            d_model: self.rows.ncols(),
        };
        Envelope::new("result_vectors", config_hash, 0, meta).save(&stem.with_extension("json"))?;
        write_f32_blob(&stem.with_extension("bin"), self.rows.as_slice().expect("standard layout"))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let m = Envelope::<ResultMatrixMeta>::load(&stem.with_extension("json"))?.payload;
        let blob = read_f32_blob(&stem.with_extension("bin"))?;
        let rows = Array2::from_shape_vec((m.words.len(), m.d_model), blob).map_err(|_| Error::Shape {
            expected: m.words.len() * m.d_model,
            got: 0,
        })?;
        Ok(Self {
            head: m.head,
            words: m.words,
            rows,
            failed: m.failed,
            word_list_hash: m.word_list_hash,
        })
    }
}

/// Cache stem for a collection: keyed by model, template, head and word list.
pub fn collection_stem(dir: &Path, model: &Model, words: &[String], head: HeadId) -> PathBuf {
    let key = cache_key(
        &model.id,
        RHYME_TEMPLATE,
        &json!({ "head": [head.layer, head.head], "words": word_list_hash(words) }),
    );
    dir.join("result_vectors").join(key)
}

/// Final-position result vector of `head` for each word. With a cache
/// directory, a previous collection of the same inputs is reused.
pub fn collect_result_vectors(
    model: &Model,
    words: &[String],
    head: HeadId,
    cache: Option<&Path>,
) -> Result<ResultMatrix> {
    model.check_head(head)?;
    let stem = cache.map(|d| collection_stem(d, model, words, head));
    if let Some(stem) = &stem {
        if stem.with_extension("json").exists() && stem.with_extension("bin").exists() {
            return ResultMatrix::load(stem);
        }
    }
    let results = par::map(words, |w| result_vector_for_word(model, w, head));
    let mut kept = Vec::new();
    let mut flat = Vec::new();
    let mut failed = Vec::new();
    for (w, r) in words.iter().zip(results) {
        match r {
            Ok(v) => {
                kept.push(w.clone());
                flat.extend(v);
            }
            Err(e) => failed.push((w.clone(), e.to_string())),
        }
    }
    if words.is_empty() || 2 * kept.len() < words.len() {
        return Err(Error::Collection {
            ok: kept.len(),
            total: words.len(),
        });
    }
    let rows = Array2::from_shape_vec((kept.len(), model.config.d_model), flat).expect("row widths match d_model");
    let m = ResultMatrix {
        head,
        words: kept,
        rows,
        failed,
        word_list_hash: word_list_hash(words),
    };
    if let Some(stem) = &stem {
        m.save(stem, "")?;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `[k, d]`, orthonormal rows in order of decreasing variance.
    pub components: Array2<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub word_list_hash: Option<String>,
    pub head: Option<HeadId>,
}

/// Mean-centered PCA keeping `k` components. Each component is signed so
/// that its largest-magnitude loading is positive.
pub fn fit_pca(matrix: &Array2<f32>, k: usize) -> Result<PcaModel> {
    let (n, d) = matrix.dim();
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let x = matrix.mapv(f64::from);
    let mean = x.mean_axis(Axis(0)).ok_or(Error::Rank { rank: 0, k })?;
    let xc = &x - &mean;
    let denom = (n.max(2) - 1) as f64;

    // Eigendecompose whichever of the covariance (d × d) and Gram (n × n)
    // matrices is smaller.
    let (vals, vecs): (Vec<f64>, Array2<f64>) = if d <= n {
        let cov = xc.t().dot(&xc) / denom;
        let (vals, vecs) = sym_eigen(&cov);
        (vals, vecs)
    } else {
        let gram = xc.dot(&xc.t()) / denom;
        let (vals, u) = sym_eigen(&gram);
        let v = xc.t().dot(&u);
        (vals, v)
    };
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let tol = total.max(f64::MIN_POSITIVE) * 1e-10 * n.max(d) as f64;
    let rank = vals.iter().filter(|&&v| v > tol).count();
    if rank < k || total <= 0.0 {
        return Err(Error::Rank { rank, k });
    }
    let mut components = Array2::<f64>::zeros((k, d));
    for i in 0..k {
        let mut c = vecs.column(i).to_owned();
        let norm = c.dot(&c).sqrt();
        c /= norm;
        let lead = c
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc })
            .0;
        if c[lead] < 0.0 {
            c.mapv_inplace(|v| -v);
        }
        components.row_mut(i).assign(&c);
    }
    let explained_variance: Vec<f64> = vals[..k].to_vec();
    Ok(PcaModel {
        mean: mean.to_vec(),
        components,
        explained_variance_ratio: explained_variance.iter().map(|v| v / total).collect(),
        explained_variance,
        word_list_hash: None,
        head: None,
    })
}

/// Eigenpairs of a symmetric matrix, sorted by decreasing eigenvalue.
fn sym_eigen(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Fit on a collection, recording its provenance.
pub fn fit_collection(collection: &ResultMatrix, k: usize) -> Result<PcaModel> {
    let mut p = fit_pca(&collection.rows, k)?;
    p.word_list_hash = Some(collection.word_list_hash.clone());
    p.head = Some(collection.head);
    Ok(p)
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn transform(&self, v: &[f32]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let c: Array1<f64> = v.iter().zip(&self.mean).map(|(x, m)| f64::from(*x) - m).collect();
        Ok(self.components.dot(&c).to_vec())
    }

    pub fn inverse_transform(&self, coords: &[f64]) -> Vec<f64> {
        let back = self.components.t().dot(&ArrayView1::from(coords));
        back.iter().zip(&self.mean).map(|(v, m)| v + m).collect()
    }

    pub fn save(&self, stem: &Path, config_hash: &str, seed: u64) -> Result<()> {
        #[derive(Serialize)]
        struct Meta<'a> {
            k: usize,
            d: usize,
            explained_variance: &'a [f64],
            explained_variance_ratio: &'a [f64],
            word_list_hash: &'a Option<String>,
            head: &'a Option<HeadId>,
        }
        let meta = serde_json::to_value(Meta {
            k: self.k(),
            d: self.dim(),
            explained_variance: &self.explained_variance,
            explained_variance_ratio: &self.explained_variance_ratio,
            word_list_hash: &self.word_list_hash,
            head: &self.head,
        })?;
        Envelope::new("pca", config_hash, seed, meta).save(&stem.with_extension("json"))?;
        let mut blob: Vec<f32> = self.mean.iter().map(|v| *v as f32).collect();
        blob.extend(self.components.iter().map(|v| *v as f32));
        write_f32_blob(&stem.with_extension("bin"), &blob)
    }

    /// Load a saved fit. Tensors round-trip through `f32`.
    pub fn load(stem: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            k: usize,
            d: usize,
            explained_variance: Vec<f64>,
            explained_variance_ratio: Vec<f64>,
            word_list_hash: Option<String>,
            head: Option<HeadId>,
        }
        let m: Meta = serde_json::from_value(Envelope::<serde_json::Value>::load(&stem.with_extension("json"))?.payload)?;
        let blob = read_f32_blob(&stem.with_extension("bin"))?;
        if blob.len() != m.d * (m.k + 1) {
            return Err(Error::Shape {
                expected: m.d * (m.k + 1),
                got: blob.len(),
            });
        }
        Ok(Self {
            mean: blob[..m.d].iter().map(|v| f64::from(*v)).collect(),
            components: Array2::from_shape_fn((m.k, m.d), |(i, j)| f64::from(blob[m.d + i * m.d + j])),
            explained_variance: m.explained_variance,
            explained_variance_ratio: m.explained_variance_ratio,
            word_list_hash: m.word_list_hash,
            head: m.head,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    PhonemeVector,
    ResultVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub label: String,
    pub coords: Vec<f64>,
    pub source: PointSource,
}

pub fn project(pca: &PcaModel, vectors: &[Vec<f32>], labels: &[String], source: PointSource) -> Result<Vec<ProjectedPoint>> {
    if vectors.len() != labels.len() {
        return Err(Error::Shape {
            expected: vectors.len(),
            got: labels.len(),
        });
    }
    vectors
        .iter()
        .zip(labels)
        .map(|(v, l)| {
            Ok(ProjectedPoint {
                label: l.clone(),
                coords: pca.transform(v)?,
                source,
            })
        })
        .collect()
}

/// Project every probe row, unit-normalized, labelled by phoneme symbol.
pub fn project_probe(pca: &PcaModel, probe: &ProbeMatrix) -> Result<Vec<ProjectedPoint>> {
    let rows: Vec<Vec<f32>> = probe
        .weights
        .rows()
        .into_iter()
        .map(|r| {
            let n = r.dot(&r).sqrt();
            r.mapv(|v| if n > 0.0 { v / n } else { v }).to_vec()
        })
        .collect();
    project(pca, &rows, &probe.symbols, PointSource::PhonemeVector)
}

/// Project collected result vectors, labelled by word.
pub fn project_collection(pca: &PcaModel, collection: &ResultMatrix) -> Result<Vec<ProjectedPoint>> {
    let rows: Vec<Vec<f32>> = collection.rows.rows().into_iter().map(|r| r.to_vec()).collect();
    project(pca, &rows, &collection.words, PointSource::ResultVector)
}

/// Kendall tau-b; `None` when either variable is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            let sx = (x[i] - x[j]).signum() * f64::from(u8::from(x[i] != x[j]));
            let sy = (y[i] - y[j]).signum() * f64::from(u8::from(y[i] != y[j]));
            if sx == 0.0 && sy == 0.0 {
                continue;
            } else if sx == 0.0 {
                tx += 1.0;
            } else if sy == 0.0 {
                ty += 1.0;
            } else if sx == sy {
                c += 1.0;
            } else {
                d += 1.0;
            }
        }
    }
    let den = ((c + d + tx) * (c + d + ty)).sqrt();
    (den > 0.0 && c + d > 0.0).then(|| (c - d) / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelException {
    pub symbol: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelReport {
    /// Component indices used for backness and openness.
    pub axes: (usize, usize),
    pub class_means: BTreeMap<Backness, f64>,
    /// Mean backness coordinate is ordered front > central > back.
    pub ordering_holds: bool,
    /// Kendall tau-b between openness and the openness axis, per class.
    pub openness_tau: BTreeMap<Backness, Option<f64>>,
    pub exceptions: Vec<VowelException>,
}

fn coords_by_label(points: &[ProjectedPoint]) -> BTreeMap<&str, &[f64]> {
    points.iter().map(|p| (p.label.as_str(), p.coords.as_slice())).collect()
}

/// Backness ordering on `axes.0` and openness ordering on `axes.1`.
///
/// A vowel is a backness exception when its coordinate falls on the wrong
/// side of a neighbouring class mean, or lies more than two pooled
/// within-class standard deviations from its own class mean. It is an
/// openness exception when most same-class vowels of different openness
/// are ordered the wrong way relative to it.
pub fn vowel_geometry_report(points: &[ProjectedPoint], inventory: &PhonemeInventory, axes: (usize, usize)) -> Result<VowelReport> {
    let by = coords_by_label(points);
    let mut vowels = Vec::new();
    for p in inventory.vowels() {
        let c = by
            .get(p.symbol.as_str())
            .ok_or_else(|| Error::NotFound(format!("no point for vowel /{}/", p.symbol)))?;
        let a = p.vowel_attrs().expect("vowel");
        let get = |i: usize| {
            c.get(i).copied().ok_or(Error::Index {
                index: i,
                len: c.len(),
            })
        };
        vowels.push((p.symbol.clone(), a.backness, f64::from(a.openness), get(axes.0)?, get(axes.1)?));
    }
    let classes = [Backness::Front, Backness::Central, Backness::Back];
    let mut class_means = BTreeMap::new();
    for b in classes {
        let xs: Vec<f64> = vowels.iter().filter(|v| v.1 == b).map(|v| v.3).collect();
        if !xs.is_empty() {
            class_means.insert(b, xs.iter().sum::<f64>() / xs.len() as f64);
        }
    }
    let mean = |b: Backness| class_means.get(&b).copied();
    let ordering_holds = match (mean(Backness::Front), mean(Backness::Central), mean(Backness::Back)) {
        (Some(f), Some(c), Some(k)) => f > c && c > k,
        _ => false,
    };
    let (ss, nn) = vowels.iter().fold((0.0, 0usize), |(s, n), v| {
        let m = class_means[&v.1];
        (s + (v.3 - m).powi(2), n + 1)
    });
    let pooled_sd = (ss / nn.saturating_sub(class_means.len()).max(1) as f64).sqrt();

    let mut exceptions = Vec::new();
    for v in &vowels {
        let (sym, b, open, x, y) = (&v.0, v.1, v.2, v.3, v.4);
        let wrong_side = match b {
            Backness::Front => mean(Backness::Central).is_some_and(|c| x <= c),
            Backness::Central => {
                mean(Backness::Front).is_some_and(|f| x >= f) || mean(Backness::Back).is_some_and(|k| x <= k)
            }
            Backness::Back => mean(Backness::Central).is_some_and(|c| x >= c),
        };
        if wrong_side {
            exceptions.push(VowelException {
                symbol: sym.clone(),
                reason: "backness coordinate on the wrong side of a neighbouring class mean".into(),
            });
        } else if pooled_sd > 0.0 && (x - class_means[&b]).abs() > 2.0 * pooled_sd {
            exceptions.push(VowelException {
                symbol: sym.clone(),
                reason: "backness coordinate far from its class mean".into(),
            });
        }
        let (mut agree, mut disagree) = (0, 0);
        for w in vowels.iter().filter(|w| w.1 == b && w.2 != open) {
            if (w.4 - y) * (w.2 - open) > 0.0 {
                agree += 1;
            } else {
                disagree += 1;
            }
        }
        if disagree > agree {
            exceptions.push(VowelException {
                symbol: sym.clone(),
                reason: "openness coordinate out of order within its class".into(),
            });
        }
    }
    let openness_tau = classes
        .iter()
        .filter(|b| class_means.contains_key(b))
        .map(|&b| {
            let (o, y): (Vec<f64>, Vec<f64>) = vowels.iter().filter(|v| v.1 == b).map(|v| (v.2, v.4)).unzip();
            (b, kendall_tau(&o, &y))
        })
        .collect();
    Ok(VowelReport {
        axes,
        class_means,
        ordering_holds,
        openness_tau,
        exceptions,
    })
}

impl VowelReport {
    pub fn exception_symbols(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.exceptions.iter().map(|e| e.symbol.as_str()).collect();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoicingPair {
    pub voiced: String,
    pub voiceless: String,
    pub displacement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoicingReport {
    pub axis: usize,
    pub pairs: Vec<VoicingPair>,
    /// Fraction of pairs displaced (nonzero) in the majority direction.
    pub sign_consistency: f64,
    pub mean_displacement: f64,
}

/// Voiced-minus-voiceless displacement along component `axis` for each pair.
pub fn voicing_geometry_report(points: &[ProjectedPoint], inventory: &PhonemeInventory, axis: usize) -> Result<VoicingReport> {
    let by = coords_by_label(points);
    let lookup = |s: &str| -> Result<f64> {
        let c = by
            .get(s)
            .ok_or_else(|| Error::NotFound(format!("no point for consonant /{s}/")))?;
        c.get(axis).copied().ok_or(Error::Index {
            index: axis,
            len: c.len(),
        })
    };
    let pairs = inventory
        .voicing_pairs()
        .into_iter()
        .map(|(v, u)| {
            Ok(VoicingPair {
                voiced: v.to_string(),
                voiceless: u.to_string(),
                displacement: lookup(v)? - lookup(u)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pos = pairs.iter().filter(|p| p.displacement > 0.0).count();
    let neg = pairs.iter().filter(|p| p.displacement < 0.0).count();
    let n = pairs.len().max(1) as f64;
    Ok(VoicingReport {
        axis,
        sign_consistency: pos.max(neg) as f64 / n,
        mean_displacement: pairs.iter().map(|p| p.displacement).sum::<f64>() / n,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelCentroid {
    pub vowel: String,
    pub words: usize,
    pub centroid: (f64, f64),
    pub nearest_phoneme: String,
    pub distance_to_own: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub axes: (usize, usize),
    pub scale: f64,
    pub shift: f64,
    /// Transformed result-vector points in the plotted plane.
    pub results: Vec<(String, f64, f64)>,
    pub phonemes: Vec<(String, f64, f64)>,
    pub centroids: Vec<VowelCentroid>,
    /// Fraction of centroids whose nearest phoneme point is their own vowel.
    pub centroid_accuracy: f64,
}

pub fn affine(coords: &[f64], scale: f64, shift: f64) -> Vec<f64> {
    coords.iter().map(|c| c * scale + shift).collect()
}

/// Rescale result-vector coordinates (`c · scale + shift`), group words by
/// their single vowel, and match each group centroid to the nearest
/// phoneme point in the `axes` plane.
pub fn overlay_result_vectors(
    results: &[ProjectedPoint],
    phonemes: &[ProjectedPoint],
    lexicon: &PronunciationLexicon,
    scale: f64,
    shift: f64,
    axes: (usize, usize),
) -> Result<Overlay> {
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::Argument("scale must be positive".into()));
    }
    let plane = |c: &[f64]| -> Result<(f64, f64)> {
        let get = |i: usize| c.get(i).copied().ok_or(Error::Index { index: i, len: c.len() });
        Ok((get(axes.0)?, get(axes.1)?))
    };
    let results: Vec<(String, f64, f64)> = results
        .iter()
        .map(|p| {
            let (x, y) = plane(&affine(&p.coords, scale, shift))?;
            Ok((p.label.clone(), x, y))
        })
        .collect::<Result<_>>()?;
    let phonemes: Vec<(String, f64, f64)> = phonemes
        .iter()
        .map(|p| {
            let (x, y) = plane(&p.coords)?;
            Ok((p.label.clone(), x, y))
        })
        .collect::<Result<_>>()?;

    let mut groups: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for (w, x, y) in &results {
        if let Some(v) = lexicon.unique_vowel(w) {
            let g = groups.entry(v.to_string()).or_default();
            g.0 += x;
            g.1 += y;
            g.2 += 1;
        }
    }
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut centroids = Vec::new();
    for (v, (sx, sy, n)) in groups {
        let c = (sx / n as f64, sy / n as f64);
        let Some(own) = phonemes.iter().find(|p| p.0 == v) else { continue };
        let nearest = phonemes
            .iter()
            .min_by(|a, b| dist(c, (a.1, a.2)).total_cmp(&dist(c, (b.1, b.2))))
            .expect("own phoneme present");
        centroids.push(VowelCentroid {
            vowel: v,
            words: n,
            centroid: c,
            nearest_phoneme: nearest.0.clone(),
            distance_to_own: dist(c, (own.1, own.2)),
        });
    }
    let hits = centroids.iter().filter(|c| c.nearest_phoneme == c.vowel).count();
    Ok(Overlay {
        axes,
        scale,
        shift,
        centroid_accuracy: if centroids.is_empty() { 0.0 } else { hits as f64 / centroids.len() as f64 },
        results,
        phonemes,
        centroids,
    })
}

/// A labelled point series for [`render_scatter`].
pub struct Series<'a> {
    pub points: &'a [(String, f64, f64)],
    pub color: (u8, u8, u8),
    pub labelled: bool,
    pub radius: u32,
}

/// Scatter plot of one or more point series as SVG.
pub fn render_scatter(series: &[Series<'_>], x_label: &str, y_label: &str, path: &Path) -> Result<()> {
    use plotters::prelude::*;

    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (_, x, y) in all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = |a: f64, b: f64| ((b - a) * 0.08).max(1e-6);
    let (px, py) = (pad(x0, x1), pad(y0, y1));
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 560)).into_drawing_area();
        let err = |e: DrawingAreaErrorKind<_>| Error::Plot(e.to_string());
        root.fill(&WHITE).map_err(err)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(20)
            .x_label_area_size(30)
            .y_label_area_size(40)
            .build_cartesian_2d(x0 - px..x1 + px, y0 - py..y1 + py)
            .map_err(err)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(y_label)
            .draw()
            .map_err(err)?;
        for s in series {
            let color = RGBColor(s.color.0, s.color.1, s.color.2);
            chart
                .draw_series(s.points.iter().map(|(_, x, y)| Circle::new((*x, *y), s.radius, color.filled())))
                .map_err(err)?;
            if s.labelled {
                chart
                    .draw_series(
                        s.points
                            .iter()
                            .map(|(l, x, y)| Text::new(l.clone(), (*x, *y), ("sans-serif", 12).into_font())),
                    )
                    .map_err(err)?;
            }
        }
        root.present().map_err(err)?;
    }
    crate::artifacts::write_atomic(path, svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(n: usize, d: usize, seed: u64) -> Array2<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn components_are_orthonormal_and_sorted() {
        for (n, d) in [(40, 6), (5, 12)] {
            let p = fit_pca(&random(n, d, 1), 3).unwrap();
            let g = p.components.dot(&p.components.t());
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g[[i, j]] - want).abs() < 1e-9);
                }
            }
            assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn identical_rows_have_no_rank() {
        let m = Array2::from_elem((5, 4), 1.5f32);
        assert!(matches!(fit_pca(&m, 1), Err(Error::Rank { rank: 0, .. })));
    }

    #[test]
    fn mean_projects_to_origin() {
        let x = random(20, 5, 2);
        let p = fit_pca(&x, 2).unwrap();
        let mean: Vec<f32> = p.mean.iter().map(|v| *v as f32).collect();
        assert!(p.transform(&mean).unwrap().iter().all(|c| c.abs() < 1e-6));
        assert!(matches!(p.transform(&[0.0; 3]), Err(Error::Shape { .. })));
    }

    #[test]
    fn sign_convention_leading_loading_positive() {
        let p = fit_pca(&random(30, 6, 3), 4).unwrap();
        for row in p.components.rows() {
            let lead = row.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn tau_values() {
        assert_eq!(kendall_tau(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(kendall_tau(&[0.0, 1.0, 2.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(kendall_tau(&[1.0, 1.0], &[0.0, 2.0]), None);
        assert_eq!(kendall_tau(&[0.0, 0.0, 2.0], &[1.0, 1.0, 5.0]), Some(1.0));
    }

    #[test]
    fn pca_roundtrips_through_disk() {
        let p = fit_pca(&random(10, 4, 4), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("pca");
        p.save(&stem, "h", 0).unwrap();
        let q = PcaModel::load(&stem).unwrap();
        assert_eq!(q.k(), 2);
        assert!((&q.components - &p.components).iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn scatter_svg() {
        let pts = vec![("a".to_string(), 0.0, 1.0), ("b".to_string(), 2.0, -1.0)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.svg");
        render_scatter(
            &[Series {
                points: &pts,
                color: (200, 0, 0),
                labelled: true,
                radius: 3,
            }],
            "PC1",
            "PC2",
            &path,
        )
        .unwrap();
        assert!(std::fs::read_to_string(path).unwrap().contains("<svg"));
    }
}
