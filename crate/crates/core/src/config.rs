// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 0
//! cache_dir = "cache"
//!
//! [model]
//! kind = "reference"
//! path = "/models/llama-3.2-1b-instruct"
//!
//! lexicon = "data/wikipron_eng_us.tsv"
//!
//! [patch]
//! mode = "final"
//! ```
//!
//! Every section and field is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifacts::{canonical_json, sha256_hex, CACHE_ENV};
use crate::error::{Error, Result};
use crate::geometry::{DEFAULT_COMPONENTS, OVERLAY_SCALE, OVERLAY_SHIFT};
use crate::head_analysis::{SparsityMode, MOVER_HEAD};
use crate::interventions::{default_c_grid, DEFAULT_CONTINUATION_TOKENS};
use crate::model::{self, planted, HeadId, Model};
use crate::patching::PositionMode;
use crate::phonetics::{PhonemeInventory, PronunciationLexicon};
use crate::probe::{ProbeConfig, MIN_PROBE_WORDS};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Tiny,
    Planted,
    Reference,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Self::Tiny),
            "planted" => Ok(Self::Planted),
            "reference" => Ok(Self::Reference),
            _ => Err(Error::Config(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// Checkpoint directory for `reference`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub threshold: f64,
    pub batch_size: usize,
    pub split_seed: u64,
    pub min_words: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let p = ProbeConfig::default();
        Self {
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            l2: p.l2,
            threshold: p.threshold,
            batch_size: p.batch_size,
            split_seed: 0,
            min_words: MIN_PROBE_WORDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterveneSection {
    pub word: String,
    pub xi: String,
    pub mu: String,
    pub c_grid: Vec<f64>,
    pub n_tokens: usize,
}

impl Default for InterveneSection {
    fn default() -> Self {
        Self {
            word: "leet".into(),
            xi: "i".into(),
            mu: "ɛ".into(),
            c_grid: default_c_grid(),
            n_tokens: DEFAULT_CONTINUATION_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchSection {
    pub mode: PositionMode,
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSection {
    pub layer: usize,
    pub head: usize,
    pub k: usize,
    pub n: usize,
    pub sparsity_mode: SparsityMode,
    /// Candidate survey words, one per line.
    pub words: Option<PathBuf>,
    pub survey_size: usize,
    pub triplet_words: usize,
}

impl Default for HeadSection {
    fn default() -> Self {
        Self {
            layer: MOVER_HEAD.layer,
            head: MOVER_HEAD.head,
            k: 10,
            n: 8,
            sparsity_mode: SparsityMode::Signed,
            words: None,
            survey_size: 100,
            triplet_words: 50,
        }
    }
}

impl HeadSection {
    pub fn head_id(&self) -> HeadId {
        HeadId::new(self.layer, self.head)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub k: usize,
    pub scale: f64,
    pub shift: f64,
    /// Words to collect; defaults to every single-token lexicon word.
    pub words: Option<PathBuf>,
    pub overlay_words: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            k: DEFAULT_COMPONENTS,
            scale: OVERLAY_SCALE,
            shift: OVERLAY_SHIFT,
            words: None,
            overlay_words: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub inventory: Option<PathBuf>,
    pub model: ModelSection,
    pub probe: ProbeSection,
    pub intervene: InterveneSection,
    pub patch: PatchSection,
    pub head: HeadSection,
    pub geometry: GeometrySection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse and check that every referenced path exists. Relative paths
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate_paths()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.cache_dir);
        fix(&mut self.lexicon);
        fix(&mut self.inventory);
        fix(&mut self.model.path);
        fix(&mut self.patch.pairs);
        fix(&mut self.head.words);
        fix(&mut self.geometry.words);
    }

    pub fn validate_paths(&self) -> Result<()> {
        let inputs = [
            &self.lexicon,
            &self.inventory,
            &self.model.path,
            &self.patch.pairs,
            &self.head.words,
            &self.geometry.words,
        ];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Content hash of the effective configuration.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        sha256_hex(canonical_json(&v).as_bytes())
    }

    /// Cache directory: the environment override, then the config, then `./cache`.
    pub fn cache_dir(&self) -> PathBuf {
        std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| self.cache_dir.clone())
            .unwrap_or_else(|| PathBuf::from("cache"))
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            epochs: self.probe.epochs,
            learning_rate: self.probe.learning_rate,
            l2: self.probe.l2,
            threshold: self.probe.threshold,
            batch_size: self.probe.batch_size,
            seed: self.seed,
        }
    }

    pub fn load_inventory(&self) -> Result<PhonemeInventory> {
        match &self.inventory {
            Some(p) => PhonemeInventory::load(p),
            None => Ok(PhonemeInventory::english()),
        }
    }

    /// The configured lexicon, or the bundled mini lexicon.
    pub fn load_lexicon(&self) -> Result<PronunciationLexicon> {
        match &self.lexicon {
            Some(p) => PronunciationLexicon::load(p, &self.load_inventory()?),
            None => Ok(PronunciationLexicon::mini()),
        }
    }

    pub fn load_model(&self) -> Result<Model> {
        match self.model.kind {
            ModelKind::Tiny => Ok(model::make_tiny_model(self.seed)),
            ModelKind::Planted => Ok(planted::build(planted::PlantedSpec::two_layer(0.05, self.seed)).model),
            ModelKind::Reference => {
                let dir = self
                    .model
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::GatedResource("no reference checkpoint configured".into()))?;
                model::reference::load(dir)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml(
            "seed = 4\n[model]\nkind = \"planted\"\n[patch]\nmode = \"all\"\n[head]\nlayer = 1\nhead = 0\n",
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.model.kind, ModelKind::Planted);
        assert_eq!(c.patch.mode, PositionMode::All);
        assert_eq!(c.head.head_id(), HeadId::new(1, 0));
        assert_eq!(c.probe.l2, 1e-4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn missing_paths_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "lexicon = \"nope.tsv\"\n").unwrap();
        assert!(matches!(RunConfig::load(&p), Err(Error::Config(_))));
        std::fs::write(dir.path().join("nope.tsv"), "").unwrap();
        assert!(RunConfig::load(&p).is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn reference_without_path_is_gated() {
        let mut c = RunConfig::default();
        c.model.kind = ModelKind::Reference;
        assert!(matches!(c.load_model(), Err(Error::GatedResource(_))));
    }
}
