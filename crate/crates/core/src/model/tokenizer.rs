// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phonetics::PronunciationLexicon;

pub trait Tokenizer: Send + Sync {
    /// Encode without special tokens.
    fn encode(&self, text: &str) -> Result<Vec<u32>>;

    /// Beginning-of-sequence token prepended to prompts, if the model uses one.
    fn bos(&self) -> Option<u32>;

    fn decode(&self, ids: &[u32]) -> String;

    /// Surface string of a single token.
    fn token_str(&self, id: u32) -> String {
        self.decode(&[id])
    }

    fn vocab_size(&self) -> usize;

    /// Prompt encoding: BOS followed by the text's tokens.
    fn encode_prompt(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids: Vec<u32> = self.bos().into_iter().collect();
        ids.extend(self.encode(text)?);
        Ok(ids)
    }
}

/// Word-level tokenizer for the tiny test models.
///
/// Pieces are split GPT-style (an optional leading space glued to a run of
/// letters; digits and punctuation on their own). Pieces not in the vocabulary
/// fall back to a space token plus one token per character.
#[derive(Debug, Clone)]
pub struct TinyTokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

pub const TINY_BOS: u32 = 0;
pub const TINY_UNK: u32 = 1;

const TEMPLATE_PIECES: &[&str] = &[
    "Here", " are", " a", " few", " examples", " of", " words", "that", " rhyme", " with",
];

impl TinyTokenizer {
    /// Vocabulary: specials, punctuation, template words, letters, digits,
    /// then `" word"` for every lexicon word, padded to `vocab_size`.
    pub fn new(lexicon: &PronunciationLexicon, vocab_size: usize) -> Self {
        let mut vocab: Vec<String> = ["<bos>", "<unk>", "\n", ":", ",", ".", " "]
            .iter()
            .map(|s| s.to_string())
            .collect();
        vocab.extend(TEMPLATE_PIECES.iter().map(|s| s.to_string()));
        vocab.extend(('a'..='z').map(String::from));
        vocab.extend(('0'..='9').map(String::from));
        for w in lexicon.words() {
            let piece = format!(" {w}");
            if !vocab.contains(&piece) {
                vocab.push(piece);
            }
        }
        assert!(
            vocab.len() <= vocab_size,
            "tiny vocabulary needs {} entries, requested {vocab_size}",
            vocab.len()
        );
        let mut i = 0;
        while vocab.len() < vocab_size {
            vocab.push(format!("<extra_{i}>"));
            i += 1;
        }
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Self { vocab, index }
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    fn pieces(text: &str) -> Vec<String> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let start = i;
            if chars[i] == ' ' && i + 1 < chars.len() && chars[i + 1].is_alphabetic() {
                i += 1;
            }
            if chars[i].is_alphabetic() {
                while i < chars.len() && chars[i].is_alphabetic() {
                    i += 1;
                }
            } else {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        }
        out
    }
}

impl Tokenizer for TinyTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = Vec::new();
        for piece in Self::pieces(text) {
            if let Some(id) = self.id(&piece) {
                ids.push(id);
                continue;
            }
            for c in piece.chars() {
                let s = c.to_lowercase().collect::<String>();
                ids.push(self.id(&s).unwrap_or(TINY_UNK));
            }
        }
        Ok(ids)
    }

    fn bos(&self) -> Option<u32> {
        Some(TINY_BOS)
    }

    fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| match i {
                TINY_BOS => "",
                i => self.vocab.get(i as usize).map_or("", String::as_str),
            })
            .collect()
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// Hugging Face `tokenizer.json` backed tokenizer.
pub struct HfTokenizer {
    inner: tokenizers::Tokenizer,
    bos: Option<u32>,
}

impl HfTokenizer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let inner = tokenizers::Tokenizer::from_file(path)
            .map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        let bos = ["<|begin_of_text|>", "<s>"]
            .iter()
            .find_map(|t| inner.token_to_id(t));
        Ok(Self { inner, bos })
    }
}

impl Tokenizer for HfTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<u32>> {
        self.inner
            .encode(text, false)
            .map(|e| e.get_ids().to_vec())
            .map_err(|e| Error::Tokenization(e.to_string()))
    }

    fn bos(&self) -> Option<u32> {
        self.bos
    }

    fn decode(&self, ids: &[u32]) -> String {
        self.inner.decode(ids, false).unwrap_or_default()
    }

    fn vocab_size(&self) -> usize {
        self.inner.get_vocab_size(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_encodes_word_as_single_token() {
        let tok = TinyTokenizer::new(&PronunciationLexicon::mini(), 128);
        let ids = tok
            .encode("Here are a few examples of words\nthat rhyme with clean:")
            .unwrap();
        assert_eq!(ids.len(), 13);
        assert_eq!(ids[11], tok.id(" clean").unwrap());
        assert!(!ids.contains(&TINY_UNK));
    }

    #[test]
    fn unknown_words_fall_back_to_letters() {
        let tok = TinyTokenizer::new(&PronunciationLexicon::mini(), 128);
        let ids = tok.encode(" qwerty").unwrap();
        assert_eq!(ids.len(), 7);
        assert_eq!(tok.decode(&ids), " qwerty");
    }

    #[test]
    fn vocab_is_padded() {
        let tok = TinyTokenizer::new(&PronunciationLexicon::mini(), 128);
        assert_eq!(tok.vocab_size(), 128);
    }
}
