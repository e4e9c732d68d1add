// SPDX-License-Identifier: MIT OR Apache-2.0

//! Phoneme inventory, pronunciation lexicon, and rhyme predicates.

mod inventory;
mod lexicon;
mod rhyme;

pub use inventory::{
    derive_inventory, Backness, ConsonantAttrs, Phoneme, PhonemeInventory, PhonemeKind, VowelAttrs,
    INVENTORY_SIZE,
};
pub use lexicon::{normalize_segment, normalize_word, Pronunciation, PronunciationLexicon};
pub use rhyme::{rhyme_tail, RhymeTail};
