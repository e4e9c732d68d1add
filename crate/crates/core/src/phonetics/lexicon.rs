// SPDX-License-Identifier: MIT OR Apache-2.0

//! WikiPron-format pronunciation lexicon.

use std::collections::BTreeMap;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use super::inventory::PhonemeInventory;
use super::rhyme::{self, RhymeTail};
use crate::error::{Error, Result};

const MINI_LEXICON_TSV: &str = include_str!("../../data/mini_lexicon.tsv");

/// One pronunciation: an ordered list of inventory symbols.
pub type Pronunciation = Vec<String>;

// Stress, length, half-length, syllable break, tie bars, syllabic mark.
const STRIPPED: &[char] = &['ˈ', 'ˌ', 'ː', 'ˑ', '.', '\u{0361}', '\u{035C}', '\u{0329}'];

// Broad-transcription variants folded onto inventory symbols.
const ALIASES: &[(&str, &str)] = &[
    ("r", "ɹ"),
    ("g", "ɡ"),
    ("ɾ", "t"),
    ("ɫ", "l"),
    ("ʧ", "tʃ"),
    ("ʤ", "dʒ"),
    ("ɜ", "ɝ"),
    ("ɜ˞", "ɝ"),
    ("ə˞", "ɚ"),
    ("ɐ", "ə"),
    ("ᵻ", "ɪ"),
    ("ɒ", "ɑ"),
    ("ʍ", "w"),
];

/// NFC-normalize one IPA segment, strip suprasegmental marks, and fold
/// known aliases. Returns `None` for segments that are empty after stripping.
pub fn normalize_segment(seg: &str) -> Option<String> {
    let s: String = seg.nfc().filter(|c| !STRIPPED.contains(c)).collect();
    if s.is_empty() {
        return None;
    }
    let folded = ALIASES
        .iter()
        .find(|(from, _)| *from == s)
        .map(|(_, to)| (*to).to_string());
    Some(folded.unwrap_or(s))
}

/// Lowercased, NFC-normalized form used as the lexicon key.
pub fn normalize_word(word: &str) -> String {
    word.trim().nfc().collect::<String>().to_lowercase()
}

#[derive(Debug, Clone)]
pub struct PronunciationLexicon {
    inventory: PhonemeInventory,
    entries: BTreeMap<String, Vec<Pronunciation>>,
    skipped: usize,
}

impl PronunciationLexicon {
    /// Parse WikiPron TSV text: `word<TAB>space-separated segments`.
    ///
    /// Rows with a segment that does not map onto the inventory are skipped
    /// and counted, as are malformed rows.
    pub fn from_tsv(text: &str, inventory: &PhonemeInventory) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<Pronunciation>> = BTreeMap::new();
        let mut skipped = 0;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((word, segs)) = line.split_once('\t') else {
                skipped += 1;
                continue;
            };
            let word = normalize_word(word);
            let pron: Option<Pronunciation> = segs
                .split_whitespace()
                .filter_map(normalize_segment)
                .map(|s| inventory.contains(&s).then_some(s))
                .collect();
            match pron {
                Some(p) if !p.is_empty() && !word.is_empty() => {
                    let list = entries.entry(word).or_default();
                    if !list.contains(&p) {
                        list.push(p);
                    }
                }
                _ => skipped += 1,
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyLexicon { skipped });
        }
        Ok(Self {
            inventory: inventory.clone(),
            entries,
            skipped,
        })
    }

    pub fn load(path: &Path, inventory: &PhonemeInventory) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, inventory)
    }

    /// Small bundled lexicon used by the tiny model and the self-test.
    pub fn mini() -> Self {
        Self::from_tsv(MINI_LEXICON_TSV, &PhonemeInventory::english())
            .expect("bundled lexicon is valid")
    }

    pub fn inventory(&self) -> &PhonemeInventory {
        &self.inventory
    }

    /// Number of rows that could not be mapped onto the inventory.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(&normalize_word(word))
    }

    /// Words in lexicographic order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn pronunciations(&self, word: &str) -> Result<&[Pronunciation]> {
        self.entries
            .get(&normalize_word(word))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::NotFound(format!("word {word:?} not in lexicon")))
    }

    pub fn first_pronunciation(&self, word: &str) -> Result<&Pronunciation> {
        Ok(&self.pronunciations(word)?[0])
    }

    /// Distinct vowels of the first pronunciation, in order of appearance.
    pub fn vowels(&self, word: &str) -> Result<Vec<&str>> {
        let mut out: Vec<&str> = Vec::new();
        for s in self.first_pronunciation(word)? {
            if self.inventory.is_vowel(s) && !out.contains(&s.as_str()) {
                out.push(s);
            }
        }
        Ok(out)
    }

    /// The single vowel of a word whose first pronunciation has exactly one
    /// distinct vowel phoneme.
    pub fn unique_vowel(&self, word: &str) -> Option<&str> {
        match self.vowels(word).ok()?.as_slice() {
            [v] => Some(v),
            _ => None,
        }
    }

    /// Multi-hot phoneme membership of the first pronunciation, in inventory order.
    pub fn multihot(&self, word: &str) -> Result<Vec<u8>> {
        let mut bits = vec![0u8; self.inventory.len()];
        for s in self.first_pronunciation(word)? {
            let i = self.inventory.index_of(s).expect("lexicon symbols are in inventory");
            bits[i] = 1;
        }
        Ok(bits)
    }

    /// Rhyme tails of every pronunciation (vowel-less pronunciations omitted).
    pub fn rhyme_tails(&self, word: &str) -> Result<Vec<RhymeTail>> {
        Ok(self
            .pronunciations(word)?
            .iter()
            .filter_map(|p| rhyme::rhyme_tail(p, &self.inventory).ok())
            .collect())
    }

    /// Two distinct words rhyme when some pair of their pronunciations has
    /// equal rhyme tails.
    pub fn rhymes(&self, a: &str, b: &str) -> Result<bool> {
        let (ta, tb) = (self.rhyme_tails(a)?, self.rhyme_tails(b)?);
        if normalize_word(a) == normalize_word(b) {
            return Ok(false);
        }
        Ok(ta.iter().any(|x| tb.contains(x)))
    }

    /// True when no pronunciation pair shares a rhyme tail, so no third word
    /// can rhyme with both.
    pub fn sufficiently_different(&self, a: &str, b: &str) -> Result<bool> {
        let (ta, tb) = (self.rhyme_tails(a)?, self.rhyme_tails(b)?);
        Ok(!ta.iter().any(|x| tb.contains(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv() -> PhonemeInventory {
        PhonemeInventory::english()
    }

    #[test]
    fn length_marks_are_stripped() {
        let lex = PronunciationLexicon::from_tsv("leet\tl iː t\n", &inv()).unwrap();
        assert_eq!(lex.first_pronunciation("leet").unwrap(), &["l", "i", "t"]);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            PronunciationLexicon::from_tsv("", &inv()),
            Err(Error::EmptyLexicon { skipped: 0 })
        ));
    }

    #[test]
    fn unmappable_rows_are_skipped_and_counted() {
        let tsv = "leet\tl iː t\nodd\tx͡y d\nkeen\tk iː n\n";
        let lex = PronunciationLexicon::from_tsv(tsv, &inv()).unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.skipped(), 1);
    }

    #[test]
    fn stress_ties_and_aliases_normalize() {
        assert_eq!(normalize_segment("ˈɛ").as_deref(), Some("ɛ"));
        assert_eq!(normalize_segment("t͡ʃ").as_deref(), Some("tʃ"));
        assert_eq!(normalize_segment("r").as_deref(), Some("ɹ"));
        assert_eq!(normalize_segment("n̩").as_deref(), Some("n"));
        assert_eq!(normalize_segment("ˈ"), None);
    }

    #[test]
    fn multihot_sets_exact_bits() {
        let lex = PronunciationLexicon::mini();
        let bits = lex.multihot("leet").unwrap();
        let inv = lex.inventory();
        let set: Vec<&str> = bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == 1)
            .map(|(i, _)| inv.phonemes()[i].symbol.as_str())
            .collect();
        assert_eq!(set.len(), 3);
        for s in ["l", "i", "t"] {
            assert!(set.contains(&s));
        }
        assert!(matches!(lex.multihot("zzz"), Err(Error::NotFound(_))));
    }

    #[test]
    fn single_phoneme_word_has_one_bit() {
        let lex = PronunciationLexicon::from_tsv("a\tə\n", &inv()).unwrap();
        assert_eq!(lex.multihot("a").unwrap().iter().map(|&b| b as usize).sum::<usize>(), 1);
    }

    #[test]
    fn multiple_pronunciations_keep_file_order() {
        let lex = PronunciationLexicon::mini();
        let prons = lex.pronunciations("read").unwrap();
        assert_eq!(prons.len(), 2);
        assert_eq!(lex.unique_vowel("read"), Some("i"));
    }

    #[test]
    fn words_are_lowercased() {
        let lex = PronunciationLexicon::from_tsv("Leet\tl iː t\n", &inv()).unwrap();
        assert!(lex.contains("leet"));
        assert!(lex.contains("LEET"));
    }
}
