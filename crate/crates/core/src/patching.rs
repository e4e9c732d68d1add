// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation patching over every attention head and MLP.
//!
//! A pair holds two prompts that differ only in the rhyme target word. Each
//! cell of the grid patches one component of the corrupt run with the clean
//! run's activation and reports the mean normalized logit difference.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifacts::write_atomic;
use crate::error::{Error, Result};
use crate::interventions::rhyme_prompt;
use crate::model::{argmax, ActivationAddress, CapturedRun, Component, HeadId, Model};
use crate::par;
use crate::phonetics::PronunciationLexicon;

/// Pinned default pair set: 20 pairs with unequal rhyme tails.
pub const DEFAULT_PAIRS: [(&str, &str); 20] = [
    ("clean", "track"),
    ("plush", "store"),
    ("beet", "cat"),
    ("bet", "moon"),
    ("dog", "cake"),
    ("time", "book"),
    ("sit", "now"),
    ("boy", "cup"),
    ("grab", "tree"),
    ("feet", "rush"),
    ("more", "fit"),
    ("lake", "spoon"),
    ("hat", "go"),
    ("net", "lime"),
    ("bit", "show"),
    ("meet", "fog"),
    ("green", "wet"),
    ("crab", "look"),
    ("toy", "seen"),
    ("brush", "kit"),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchPair {
    pub clean_word: String,
    pub corrupt_word: String,
    pub clean_answer: u32,
    pub corrupt_answer: u32,
    pub clean: CapturedRun,
    pub corrupt: CapturedRun,
}

impl PatchPair {
    pub fn clean_prompt(&self) -> &str {
        &self.clean.prompt
    }

    pub fn corrupt_prompt(&self) -> &str {
        &self.corrupt.prompt
    }

    /// logit(clean answer) − logit(corrupt answer).
    pub fn logit_diff(&self, logits: &[f32]) -> f64 {
        f64::from(logits[self.clean_answer as usize]) - f64::from(logits[self.corrupt_answer as usize])
    }

    pub fn denominator(&self) -> f64 {
        self.logit_diff(&self.clean.logits) - self.logit_diff(&self.corrupt.logits)
    }
}

/// Build and cache both runs of a pair, capturing every head z, MLP output
/// and post-layer residual at every position.
pub fn make_pair(model: &Model, clean: &str, corrupt: &str, lexicon: &PronunciationLexicon) -> Result<PatchPair> {
    if !lexicon.sufficiently_different(clean, corrupt)? {
        return Err(Error::Pair(format!("{clean:?} and {corrupt:?} share a rhyme")));
    }
    for w in [clean, corrupt] {
        if model.word_token(w).is_none() {
            return Err(Error::Tokenization(format!("{w:?} is not a single token")));
        }
    }
    let (pc, pk) = (rhyme_prompt(clean), rhyme_prompt(corrupt));
    let (tc, tk) = (model.encode_prompt(&pc)?, model.encode_prompt(&pk)?);
    if tc.len() != tk.len() {
        return Err(Error::PromptLength {
            clean: tc.len(),
            corrupt: tk.len(),
        });
    }
    let addrs = model.scan_addresses(tc.len());
    let clean_run = model.run_with_capture(&pc, &addrs)?;
    let corrupt_run = model.run_with_capture(&pk, &addrs)?;
    let (ca, ka) = (argmax(&clean_run.logits), argmax(&corrupt_run.logits));
    if ca == ka {
        return Err(Error::DegeneratePair(ca));
    }
    Ok(PatchPair {
        clean_word: clean.to_string(),
        corrupt_word: corrupt.to_string(),
        clean_answer: ca,
        corrupt_answer: ka,
        clean: clean_run,
        corrupt: corrupt_run,
    })
}

/// Build every pair that can be built, returning the failures alongside.
pub fn make_pairs(
    model: &Model,
    words: &[(String, String)],
    lexicon: &PronunciationLexicon,
) -> (Vec<PatchPair>, Vec<(String, String, String)>) {
    let results = par::map(words, |(a, b)| make_pair(model, a, b, lexicon));
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for ((a, b), r) in words.iter().zip(results) {
        match r {
            Ok(p) => ok.push(p),
            Err(e) => failed.push((a.clone(), b.clone(), e.to_string())),
        }
    }
    (ok, failed)
}

pub fn default_pair_words() -> Vec<(String, String)> {
    DEFAULT_PAIRS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

/// Pair files are JSON lists of two-element word lists.
pub fn load_pair_words(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_pair_words(path: &Path, words: &[(String, String)]) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(words)?.as_bytes())
}

/// `(LD(patched) − LD(corrupt)) / (LD(clean) − LD(corrupt))`.
pub fn normalized_logit_diff(patched: &[f32], pair: &PatchPair) -> Result<f64> {
    let den = pair.denominator();
    if den.abs() < 1e-6 {
        return Err(Error::DegenerateDenominator(den.abs()));
    }
    Ok((pair.logit_diff(patched) - pair.logit_diff(&pair.corrupt.logits)) / den)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionMode {
    #[default]
    Final,
    All,
}

impl std::str::FromStr for PositionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final" => Ok(Self::Final),
            "all" => Ok(Self::All),
            _ => Err(Error::Argument(format!("unknown position mode {s:?}"))),
        }
    }
}

/// Which run supplies the patched values. `Corrupt` is the self-patch control.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchSource {
    #[default]
    Clean,
    Corrupt,
}

/// A patchable component: a head (`head = Some`) or a layer's MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentRef {
    pub layer: usize,
    pub head: Option<usize>,
}

impl std::fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.head {
            Some(h) => write!(f, "{}", HeadId::new(self.layer, h)),
            None => write!(f, "MLP{}", self.layer),
        }
    }
}

fn component_patches(
    pair: &PatchPair,
    comp: ComponentRef,
    mode: PositionMode,
    source: PatchSource,
) -> Result<BTreeMap<ActivationAddress, Vec<f32>>> {
    let run = match source {
        PatchSource::Clean => &pair.clean,
        PatchSource::Corrupt => &pair.corrupt,
    };
    let positions: Vec<usize> = match mode {
        PositionMode::Final => vec![run.final_position()],
        PositionMode::All => (0..run.tokens.len()).collect(),
    };
    positions
        .into_iter()
        .map(|p| {
            let addr = match comp.head {
                Some(h) => ActivationAddress::head_z(comp.layer, h, p),
                None => ActivationAddress::layer_scoped(comp.layer, Component::MlpOut, p),
            };
            Ok((addr, run.get(&addr)?.to_vec()))
        })
        .collect()
}

/// Normalized logit difference of one component patched into one pair.
pub fn patch_cell(
    model: &Model,
    pair: &PatchPair,
    comp: ComponentRef,
    mode: PositionMode,
    source: PatchSource,
) -> Result<f64> {
    let patches = component_patches(pair, comp, mode, source)?;
    let logits = model.run_with_patch(pair.corrupt_prompt(), patches)?;
    normalized_logit_diff(&logits, pair)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub n_layers: usize,
    pub n_heads: usize,
    /// `[layer][head]`, with the MLP in column `n_heads`.
    pub values: Vec<Vec<f64>>,
    pub pair_count: usize,
    pub pairs: Vec<(String, String)>,
    pub skipped: Vec<(String, String, String)>,
    pub mode: PositionMode,
    pub source: PatchSource,
}

impl PatchGrid {
    pub fn get(&self, comp: ComponentRef) -> f64 {
        self.values[comp.layer][comp.head.unwrap_or(self.n_heads)]
    }

    pub fn components(&self) -> impl Iterator<Item = (ComponentRef, f64)> + '_ {
        self.values.iter().enumerate().flat_map(move |(l, row)| {
            row.iter().enumerate().map(move |(c, &v)| {
                let head = (c < self.n_heads).then_some(c);
                (ComponentRef { layer: l, head }, v)
            })
        })
    }

    pub fn mean(&self) -> f64 {
        let n = self.n_layers * (self.n_heads + 1);
        self.components().map(|(_, v)| v).sum::<f64>() / n as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.components().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }
}

/// Patch every head z and MLP output of the corrupt run with the clean run.
pub fn patch_scan(model: &Model, pairs: &[PatchPair], mode: PositionMode) -> Result<PatchGrid> {
    patch_scan_from(model, pairs, mode, PatchSource::Clean)
}

pub fn patch_scan_from(
    model: &Model,
    pairs: &[PatchPair],
    mode: PositionMode,
    source: PatchSource,
) -> Result<PatchGrid> {
    let mut usable = Vec::new();
    let mut skipped = Vec::new();
    for p in pairs {
        if p.denominator().abs() < 1e-6 {
            log::warn!("skipping degenerate pair {} / {}", p.clean_word, p.corrupt_word);
            skipped.push((p.clean_word.clone(), p.corrupt_word.clone(), "degenerate denominator".into()));
        } else {
            usable.push(p);
        }
    }
    if usable.is_empty() {
        return Err(Error::Scan("no usable pairs".into()));
    }
    let (nl, nh) = (model.config.n_layers, model.config.n_heads);
    let cells: Vec<ComponentRef> = (0..nl)
        .flat_map(|l| {
            (0..=nh).map(move |c| ComponentRef {
                layer: l,
                head: (c < nh).then_some(c),
            })
        })
        .collect();
    let scores = par::map(&cells, |&comp| {
        let mut sum = 0.0;
        for p in &usable {
            sum += patch_cell(model, p, comp, mode, source)?;
        }
        Ok(sum / usable.len() as f64)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(PatchGrid {
        n_layers: nl,
        n_heads: nh,
        values: scores.chunks(nh + 1).map(<[f64]>::to_vec).collect(),
        pair_count: usable.len(),
        pairs: usable
            .iter()
            .map(|p| (p.clean_word.clone(), p.corrupt_word.clone()))
            .collect(),
        skipped,
        mode,
        source,
    })
}

/// Per-layer mean score when the whole post-layer residual is patched.
pub fn residual_scan(
    model: &Model,
    pairs: &[PatchPair],
    mode: PositionMode,
    source: PatchSource,
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::Scan("no pairs".into()));
    }
    let layers: Vec<usize> = (0..model.config.n_layers).collect();
    par::map(&layers, |&layer| {
        let mut sum = 0.0;
        for pair in pairs {
            let run = match source {
                PatchSource::Clean => &pair.clean,
                PatchSource::Corrupt => &pair.corrupt,
            };
            let positions: Vec<usize> = match mode {
                PositionMode::Final => vec![run.final_position()],
                PositionMode::All => (0..run.tokens.len()).collect(),
            };
            let patches = positions
                .into_iter()
                .map(|p| {
                    let a = ActivationAddress::layer_scoped(layer, Component::ResidPost, p);
                    Ok((a, run.get(&a)?.to_vec()))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            let logits = model.run_with_patch(pair.corrupt_prompt(), patches)?;
            sum += normalized_logit_diff(&logits, pair)?;
        }
        Ok(sum / pairs.len() as f64)
    })
    .into_iter()
    .collect()
}

/// Cells by descending score; ties by `(layer, head)` with the MLP last.
pub fn top_components(grid: &PatchGrid, k: usize) -> Vec<(ComponentRef, f64)> {
    let mut all: Vec<(ComponentRef, f64)> = grid.components().collect();
    let key = |c: &ComponentRef| (c.layer, c.head.unwrap_or(usize::MAX));
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| key(&a.0).cmp(&key(&b.0))));
    all.truncate(k);
    all
}

/// Heatmap of a grid (layers down, heads across, MLP in the last column) as SVG.
pub fn render_heatmap(grid: &PatchGrid, path: &Path) -> Result<()> {
    use plotters::prelude::*;

    let cell = 18u32;
    let (left, top) = (50u32, 30u32);
    let cols = grid.n_heads as u32 + 1;
    let rows = grid.n_layers as u32;
    let size = (left + cols * cell + 20, top + rows * cell + 20);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, size).into_drawing_area();
        let err = |e: DrawingAreaErrorKind<_>| Error::Plot(e.to_string());
        root.fill(&WHITE).map_err(err)?;
        let scale = grid.max_abs().max(1e-12);
        for (comp, v) in grid.components() {
            let x = left + comp.head.map_or(cols - 1, |h| h as u32) * cell;
            let y = top + comp.layer as u32 * cell;
            let t = (v / scale).clamp(-1.0, 1.0);
            let fade = |t: f64| (255.0 * (1.0 - t.abs())) as u8;
            let color = if t >= 0.0 {
                RGBColor(255, fade(t), fade(t))
            } else {
                RGBColor(fade(t), fade(t), 255)
            };
            root.draw(&Rectangle::new(
                [(x as i32, y as i32), ((x + cell) as i32, (y + cell) as i32)],
                color.filled(),
            ))
            .map_err(err)?;
        }
        for l in 0..rows {
            root.draw(&Text::new(
                format!("L{l}"),
                (10, (top + l * cell + 4) as i32),
                ("sans-serif", 11),
            ))
            .map_err(err)?;
        }
        root.draw(&Text::new("MLP", ((left + (cols - 1) * cell) as i32, 10), ("sans-serif", 11)))
            .map_err(err)?;
        root.present().map_err(err)?;
    }
    write_atomic(path, svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: Vec<Vec<f64>>) -> PatchGrid {
        PatchGrid {
            n_layers: values.len(),
            n_heads: values[0].len() - 1,
            values,
            pair_count: 1,
            pairs: vec![],
            skipped: vec![],
            mode: PositionMode::Final,
            source: PatchSource::Clean,
        }
    }

    #[test]
    fn default_pairs_are_sufficiently_different() {
        let lex = PronunciationLexicon::mini();
        for (a, b) in DEFAULT_PAIRS {
            assert!(lex.sufficiently_different(a, b).unwrap(), "{a} {b}");
        }
    }

    #[test]
    fn ranking_breaks_ties_by_address() {
        let g = grid(vec![vec![0.0, 0.5, 0.0], vec![0.5, 0.0, 0.9]]);
        let top = top_components(&g, 3);
        assert_eq!(top[0].0, ComponentRef { layer: 1, head: None });
        assert_eq!(top[1].0, ComponentRef { layer: 0, head: Some(1) });
        assert_eq!(top[2].0, ComponentRef { layer: 1, head: Some(0) });
        assert_eq!(top_components(&g, 100).len(), 6);
    }

    #[test]
    fn single_nonzero_cell_ranks_first() {
        let g = grid(vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.3, 0.0]]);
        assert_eq!(top_components(&g, 1)[0], (ComponentRef { layer: 1, head: Some(1) }, 0.3));
    }

    #[test]
    fn heatmap_writes_svg() {
        let g = grid(vec![vec![0.1, -0.5, 0.0], vec![0.9, 0.0, 0.2]]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("grid.svg");
        render_heatmap(&g, &p).unwrap();
        let s = std::fs::read_to_string(p).unwrap();
        assert!(s.starts_with("<svg"));
        assert!(s.contains("MLP"));
    }

    #[test]
    fn position_mode_parses() {
        assert_eq!("all".parse::<PositionMode>().unwrap(), PositionMode::All);
        assert!("mid".parse::<PositionMode>().is_err());
    }
}
