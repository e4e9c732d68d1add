// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use phonolens::artifacts::{cache_key, Envelope};
use phonolens::config::{ModelKind, RunConfig};
use phonolens::interventions::RHYME_TEMPLATE;
use phonolens::model::planted::{self, PlantedSpec};
use phonolens::model::Model;
use phonolens::phonetics::PronunciationLexicon;
use phonolens::probe::{build_dataset_with_min, train_probe, ProbeDataset, ProbeMatrix};
use phonolens::{Error, Result};

/// Effective configuration plus lazily loaded resources.
pub struct Ctx {
    pub cfg: RunConfig,
    pub cache: PathBuf,
    model: Option<Model>,
    lexicon: Option<PronunciationLexicon>,
}

impl Ctx {
    pub fn new(cfg: RunConfig, cache: PathBuf) -> Self {
        Self {
            cfg,
            cache,
            model: None,
            lexicon: None,
        }
    }

    pub fn hash(&self) -> String {
        self.cfg.hash()
    }

    pub fn model(&mut self) -> Result<&Model> {
        if self.model.is_none() {
            self.model = Some(self.cfg.load_model()?);
        }
        Ok(self.model.as_ref().expect("just loaded"))
    }

    pub fn lexicon(&mut self) -> Result<&PronunciationLexicon> {
        if self.lexicon.is_none() {
            self.lexicon = Some(self.cfg.load_lexicon()?);
        }
        Ok(self.lexicon.as_ref().expect("just loaded"))
    }

    /// Model and lexicon together.
    pub fn resources(&mut self) -> Result<(&Model, &PronunciationLexicon)> {
        self.model()?;
        self.lexicon()?;
        Ok((self.model.as_ref().unwrap(), self.lexicon.as_ref().unwrap()))
    }

    fn key(&mut self, kind: &str, params: &Value) -> Result<String> {
        let model_id = self.model()?.id.clone();
        Ok(cache_key(
            &model_id,
            RHYME_TEMPLATE,
            &json!({ "kind": kind, "config": self.hash(), "params": params }),
        ))
    }

    pub fn artifact_path(&mut self, kind: &str, params: &Value, ext: &str) -> Result<PathBuf> {
        let key = self.key(kind, params)?;
        Ok(self.cache.join("artifacts").join(format!("{kind}-{}.{ext}", &key[..16])))
    }

    /// Return the stored payload for `(kind, params)` or compute and store it.
    pub fn artifact<T: Serialize>(
        &mut self,
        kind: &str,
        params: Value,
        compute: impl FnOnce(&mut Self) -> Result<T>,
    ) -> Result<(PathBuf, Value)> {
        let path = self.artifact_path(kind, &params, "json")?;
        if path.exists() {
            log::info!("cache hit: {}", path.display());
            return Ok((path.clone(), Envelope::<Value>::load(&path)?.payload));
        }
        let payload = serde_json::to_value(compute(self)?)?;
        Envelope::new(kind, &self.hash(), self.cfg.seed, payload.clone()).save(&path)?;
        Ok((path, payload))
    }

    pub fn dataset(&mut self) -> Result<ProbeDataset> {
        let (split, min) = (self.cfg.probe.split_seed, self.cfg.probe.min_words);
        let (m, l) = self.resources()?;
        build_dataset_with_min(m, l, split, min)
    }

    fn probe_stem(&mut self) -> Result<PathBuf> {
        let params = serde_json::to_value(&self.cfg.probe)?;
        let key = self.key("probe", &params)?;
        Ok(self.cache.join("probes").join(&key[..16]))
    }

    /// The planted probe for planted models, otherwise the cached trained
    /// probe (training it on first use).
    pub fn probe(&mut self) -> Result<ProbeMatrix> {
        if self.cfg.model.kind == ModelKind::Planted {
            return Ok(planted::build(PlantedSpec::two_layer(0.05, self.cfg.seed)).probe);
        }
        let stem = self.probe_stem()?;
        if stem.with_extension("json").exists() {
            return ProbeMatrix::load(&stem);
        }
        self.train_probe_to(&stem)
    }

    pub fn train_probe(&mut self) -> Result<(PathBuf, ProbeMatrix)> {
        let stem = self.probe_stem()?;
        if stem.with_extension("json").exists() {
            log::info!("cache hit: {}", stem.display());
            return Ok((stem.clone(), ProbeMatrix::load(&stem)?));
        }
        let p = self.train_probe_to(&stem)?;
        Ok((stem, p))
    }

    fn train_probe_to(&mut self, stem: &Path) -> Result<ProbeMatrix> {
        let ds = self.dataset()?;
        let inv = self.lexicon()?.inventory().clone();
        let probe = train_probe(&ds, &inv, &self.cfg.probe_config())?;
        probe.save(stem, &self.hash())?;
        Ok(probe)
    }

    /// Words from a one-per-line file.
    pub fn read_words(path: &Path) -> Result<Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect())
    }
}
