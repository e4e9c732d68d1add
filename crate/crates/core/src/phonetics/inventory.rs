// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of phonemes in the probe's output space.
pub const INVENTORY_SIZE: usize = 44;

const DEFAULT_INVENTORY_JSON: &str = include_str!("../../data/inventory_v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backness {
    Front,
    Central,
    Back,
}

/// Articulatory attributes of a vowel.
///
/// `openness` runs from 0 (close) to 6 (open). Diphthongs carry the
/// attributes of their onset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VowelAttrs {
    pub backness: Backness,
    pub openness: u8,
    pub rounded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsonantAttrs {
    pub voiced: bool,
    /// The other member of this consonant's voicing pair, if it has one.
    pub counterpart: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PhonemeKind {
    Vowel(VowelAttrs),
    Consonant(ConsonantAttrs),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phoneme {
    pub symbol: String,
    #[serde(flatten)]
    pub kind: PhonemeKind,
}

impl Phoneme {
    pub fn is_vowel(&self) -> bool {
        matches!(self.kind, PhonemeKind::Vowel(_))
    }

    pub fn vowel_attrs(&self) -> Option<&VowelAttrs> {
        match &self.kind {
            PhonemeKind::Vowel(v) => Some(v),
            PhonemeKind::Consonant(_) => None,
        }
    }

    pub fn consonant_attrs(&self) -> Option<&ConsonantAttrs> {
        match &self.kind {
            PhonemeKind::Consonant(c) => Some(c),
            PhonemeKind::Vowel(_) => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct InventoryFile {
    version: u32,
    phonemes: Vec<Phoneme>,
}

/// The fixed, ordered 44-phoneme inventory. Probe rows follow this order.
#[derive(Debug, Clone)]
pub struct PhonemeInventory {
    version: u32,
    phonemes: Vec<Phoneme>,
    index: HashMap<String, usize>,
}

impl PartialEq for PhonemeInventory {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.phonemes == other.phonemes
    }
}

impl PhonemeInventory {
    /// The bundled General American inventory.
    pub fn english() -> Self {
        Self::from_json(DEFAULT_INVENTORY_JSON).expect("bundled inventory is valid")
    }

    pub fn new(version: u32, phonemes: Vec<Phoneme>) -> Result<Self> {
        if phonemes.len() != INVENTORY_SIZE {
            return Err(Error::Config(format!(
                "inventory must have {INVENTORY_SIZE} phonemes, got {}",
                phonemes.len()
            )));
        }
        let mut index = HashMap::with_capacity(phonemes.len());
        for (i, p) in phonemes.iter().enumerate() {
            if index.insert(p.symbol.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate phoneme {}", p.symbol)));
            }
        }
        for p in &phonemes {
            if let Some(ConsonantAttrs {
                counterpart: Some(other),
                ..
            }) = p.consonant_attrs()
            {
                let back = index
                    .get(other)
                    .and_then(|&j| phonemes[j].consonant_attrs())
                    .and_then(|c| c.counterpart.as_deref());
                if back != Some(p.symbol.as_str()) {
                    return Err(Error::Config(format!(
                        "voicing pair {} -> {} is not symmetric",
                        p.symbol, other
                    )));
                }
            }
        }
        Ok(Self {
            version,
            phonemes,
            index,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: InventoryFile = serde_json::from_str(s)?;
        Self::new(file.version, file.phonemes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InventoryFile {
            version: self.version,
            phonemes: self.phonemes.clone(),
        })
        .expect("inventory serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical JSON form; recorded in probe artifacts.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }

    pub fn phonemes(&self) -> &[Phoneme] {
        &self.phonemes
    }

    pub fn get(&self, symbol: &str) -> Option<&Phoneme> {
        self.index.get(symbol).map(|&i| &self.phonemes[i])
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }

    pub fn is_vowel(&self, symbol: &str) -> bool {
        self.get(symbol).is_some_and(Phoneme::is_vowel)
    }

    pub fn vowels(&self) -> impl Iterator<Item = &Phoneme> {
        self.phonemes.iter().filter(|p| p.is_vowel())
    }

    /// Attribute record of a vowel.
    pub fn vowel_class(&self, symbol: &str) -> Result<VowelAttrs> {
        let p = self
            .get(symbol)
            .ok_or_else(|| Error::NotFound(format!("phoneme /{symbol}/")))?;
        p.vowel_attrs()
            .copied()
            .ok_or_else(|| Error::Kind(format!("/{symbol}/ is a consonant")))
    }

    /// Voicing partner of a consonant, `None` for unpaired consonants,
    /// vowels, and unknown symbols.
    pub fn voicing_counterpart(&self, symbol: &str) -> Option<&str> {
        self.get(symbol)
            .and_then(Phoneme::consonant_attrs)
            .and_then(|c| c.counterpart.as_deref())
    }

    /// `(voiced, voiceless)` symbol pairs in inventory order of the voiced member.
    pub fn voicing_pairs(&self) -> Vec<(&str, &str)> {
        self.phonemes
            .iter()
            .filter_map(|p| {
                let c = p.consonant_attrs()?;
                let other = c.counterpart.as_deref()?;
                c.voiced.then_some((p.symbol.as_str(), other))
            })
            .collect()
    }
}

/// Rank segment frequencies from a WikiPron file and keep the 44 most
/// frequent symbols whose attributes appear in `attributes`.
///
/// Symbols are normalized exactly as [`super::lexicon::normalize_segment`]
/// does. Fails if fewer than 44 attributed symbols occur.
pub fn derive_inventory(path: &Path, attributes: &PhonemeInventory) -> Result<PhonemeInventory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut counts: HashMap<String, usize> = HashMap::new();
    for line in text.lines() {
        let Some((_, segs)) = line.split_once('\t') else {
            continue;
        };
        for seg in segs.split_whitespace() {
            if let Some(s) = super::lexicon::normalize_segment(seg) {
                *counts.entry(s).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(s, _)| attributes.contains(s))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if ranked.len() < INVENTORY_SIZE {
        return Err(Error::InsufficientData {
            got: ranked.len(),
            need: INVENTORY_SIZE,
        });
    }
    let phonemes = ranked
        .into_iter()
        .take(INVENTORY_SIZE)
        .map(|(s, _)| attributes.get(&s).cloned().expect("filtered above"))
        .collect();
    PhonemeInventory::new(attributes.version() + 1, phonemes)
}
