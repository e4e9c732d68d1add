// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::inventory::PhonemeInventory;
use crate::error::{Error, Result};

/// Suffix of a pronunciation starting at its final vowel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RhymeTail(pub Vec<String>);

impl RhymeTail {
    pub fn vowel(&self) -> &str {
        &self.0[0]
    }

    pub fn phonemes(&self) -> &[String] {
        &self.0
    }
}

impl std::fmt::Display for RhymeTail {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "/{}/", self.0.join(" "))
    }
}

pub fn rhyme_tail(pron: &[String], inventory: &PhonemeInventory) -> Result<RhymeTail> {
    let start = pron
        .iter()
        .rposition(|s| inventory.is_vowel(s))
        .ok_or_else(|| Error::NoVowel(pron.join(" ")))?;
    Ok(RhymeTail(pron[start..].to_vec()))
}
