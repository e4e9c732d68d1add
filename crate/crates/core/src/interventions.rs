// SPDX-License-Identifier: MIT OR Apache-2.0

//! Embedding-space vowel interventions.
//!
//! The target word's embedding row is shifted by `c · (μ − ξ)`, where ξ and
//! μ are probe rows for the word's vowel and a replacement vowel, and the
//! greedy continuation is classified by the vowels of the words it names.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, Model};
use crate::par;
use crate::phonetics::{normalize_word, PronunciationLexicon};
use crate::probe::ProbeMatrix;

pub const RHYME_TEMPLATE: &str = "Here are a few examples of words\nthat rhyme with {word}:";

pub fn rhyme_prompt(word: &str) -> String {
    RHYME_TEMPLATE.replace("{word}", word)
}

pub fn default_c_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) * 2.0).collect()
}

pub const DEFAULT_CONTINUATION_TOKENS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub word: String,
    pub xi: String,
    pub mu: String,
    pub c_grid: Vec<f64>,
    pub n_continuation_tokens: usize,
}

impl InterventionSpec {
    pub fn new(word: &str, xi: &str, mu: &str) -> Self {
        Self {
            word: word.to_string(),
            xi: xi.to_string(),
            mu: mu.to_string(),
            c_grid: default_c_grid(),
            n_continuation_tokens: DEFAULT_CONTINUATION_TOKENS,
        }
    }

    pub fn validate(&self, lexicon: &PronunciationLexicon) -> Result<()> {
        let inv = lexicon.inventory();
        for v in [&self.xi, &self.mu] {
            if !inv.is_vowel(v) {
                return Err(Error::Spec(format!("/{v}/ is not an inventory vowel")));
            }
        }
        if self.xi == self.mu {
            return Err(Error::Spec("xi and mu must differ".into()));
        }
        let vowels = lexicon.vowels(&self.word)?;
        if vowels.len() != 1 {
            return Err(Error::Spec(format!(
                "{:?} has {} distinct vowels, expected one",
                self.word,
                vowels.len()
            )));
        }
        if vowels[0] != self.xi {
            return Err(Error::Spec(format!(
                "/{}/ does not occur in {:?}",
                self.xi, self.word
            )));
        }
        if self.c_grid.first() != Some(&0.0) {
            return Err(Error::Spec("c grid must start at 0".into()));
        }
        if self.c_grid.windows(2).any(|w| w[0] >= w[1]) || self.c_grid.iter().any(|c| !c.is_finite()) {
            return Err(Error::Spec("c grid must be finite and strictly ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VowelClass {
    XiVowel,
    MuVowel,
    ThirdParty,
    Mixed,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    /// Greedy argmax at the prompt's final position.
    pub top_token: u32,
    pub continuation: String,
    pub words: Vec<String>,
    pub classification: VowelClass,
    pub third_party: BTreeSet<String>,
}

/// Lowercased words of `text` that appear in the lexicon, in order.
pub fn extract_words(text: &str, lexicon: &PronunciationLexicon) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(normalize_word)
        .filter(|w| !w.is_empty() && lexicon.contains(w))
        .collect()
}

/// Majority label over lexicon-known words plus the set of vowels other
/// than ξ and μ seen in any of them. Ties between labels give `Mixed`.
pub fn classify_vowels(
    words: &[String],
    lexicon: &PronunciationLexicon,
    xi: &str,
    mu: &str,
) -> (VowelClass, BTreeSet<String>) {
    let mut votes: BTreeMap<VowelClass, usize> = BTreeMap::new();
    let mut third = BTreeSet::new();
    for w in words {
        let Ok(vowels) = lexicon.vowels(w) else { continue };
        let has_xi = vowels.contains(&xi);
        let has_mu = vowels.contains(&mu);
        third.extend(vowels.iter().filter(|v| **v != xi && **v != mu).map(|v| v.to_string()));
        let label = match (has_xi, has_mu) {
            (true, false) => VowelClass::XiVowel,
            (false, true) => VowelClass::MuVowel,
            (true, true) => VowelClass::Mixed,
            (false, false) => VowelClass::ThirdParty,
        };
        *votes.entry(label).or_default() += 1;
    }
    let Some(&best) = votes.values().max() else {
        return (VowelClass::Unknown, third);
    };
    let winners: Vec<VowelClass> = votes.iter().filter(|(_, n)| **n == best).map(|(c, _)| *c).collect();
    let class = if winners.len() == 1 { winners[0] } else { VowelClass::Mixed };
    (class, third)
}

/// Run the sweep: one greedy decode per grid value.
pub fn intervene(
    model: &Model,
    probe: &ProbeMatrix,
    lexicon: &PronunciationLexicon,
    spec: &InterventionSpec,
) -> Result<Vec<SweepRow>> {
    spec.validate(lexicon)?;
    let word_id = model
        .word_token(&spec.word)
        .ok_or_else(|| Error::Tokenization(format!("{:?} is not a single token", spec.word)))?;
    let prompt = rhyme_prompt(&spec.word);
    let tokens = model.encode_prompt(&prompt)?;
    let position = tokens
        .iter()
        .position(|&t| t == word_id)
        .ok_or_else(|| Error::Tokenization(format!("{:?} not found in prompt tokens", spec.word)))?;
    let xi = probe.phoneme_vector(&spec.xi)?;
    let mu = probe.phoneme_vector(&spec.mu)?;
    let dir: Vec<f64> = mu.iter().zip(&xi).map(|(m, x)| f64::from(*m) - f64::from(*x)).collect();

    par::map(&spec.c_grid, |&c| {
        let delta: Vec<f32> = dir.iter().map(|d| (c * d) as f32).collect();
        let (logits, cont) =
            model.run_with_embedding_edit(&prompt, position, &delta, spec.n_continuation_tokens)?;
        let continuation = model.tokenizer.decode(&cont);
        let words = extract_words(&continuation, lexicon);
        let (classification, third_party) = classify_vowels(&words, lexicon, &spec.xi, &spec.mu);
        Ok(SweepRow {
            c,
            top_token: argmax(&logits),
            continuation,
            words,
            classification,
            third_party,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCurve {
    pub c_switch: Option<f64>,
    pub third_party_cs: Vec<f64>,
}

/// Smallest `c` from which every row is `MuVowel`, plus all third-party `c`s.
pub fn transition_curve(rows: &[SweepRow]) -> TransitionCurve {
    let mut c_switch = None;
    for r in rows.iter().rev() {
        if r.classification != VowelClass::MuVowel {
            break;
        }
        c_switch = Some(r.c);
    }
    TransitionCurve {
        c_switch,
        third_party_cs: rows
            .iter()
            .filter(|r| r.classification == VowelClass::ThirdParty)
            .map(|r| r.c)
            .collect(),
    }
}

pub fn to_jsonl(rows: &[SweepRow]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("sweep rows serialize") + "\n")
        .collect()
}

const BLUE: &str = "\x1b[34m";
const RED: &str = "\x1b[31m";
const MAGENTA: &str = "\x1b[35m";
const RESET: &str = "\x1b[0m";

/// Text rendering of a sweep; words containing ξ are blue, μ red, both magenta.
pub fn render_colored(rows: &[SweepRow], lexicon: &PronunciationLexicon, xi: &str, mu: &str) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = write!(out, "c={:<6} ", r.c);
        for w in &r.words {
            let vowels = lexicon.vowels(w).unwrap_or_default();
            let color = match (vowels.contains(&xi), vowels.contains(&mu)) {
                (true, true) => MAGENTA,
                (true, false) => BLUE,
                (false, true) => RED,
                (false, false) => "",
            };
            if color.is_empty() {
                let _ = write!(out, "{w} ");
            } else {
                let _ = write!(out, "{color}{w}{RESET} ");
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> PronunciationLexicon {
        PronunciationLexicon::mini()
    }

    fn row(c: f64, class: VowelClass) -> SweepRow {
        SweepRow {
            c,
            top_token: 0,
            continuation: String::new(),
            words: vec![],
            classification: class,
            third_party: BTreeSet::new(),
        }
    }

    #[test]
    fn prompt_template() {
        assert_eq!(
            rhyme_prompt("leet"),
            "Here are a few examples of words\nthat rhyme with leet:"
        );
        assert_eq!(rhyme_prompt(""), "Here are a few examples of words\nthat rhyme with :");
    }

    #[test]
    fn classification() {
        let l = lex();
        let w = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(classify_vowels(&w(&["beet", "feet"]), &l, "i", "ɛ").0, VowelClass::XiVowel);
        assert_eq!(classify_vowels(&w(&["bet", "set", "beet"]), &l, "i", "ɛ").0, VowelClass::MuVowel);
        assert_eq!(classify_vowels(&[], &l, "i", "ɛ").0, VowelClass::Unknown);
        assert_eq!(classify_vowels(&w(&["zzz"]), &l, "i", "ɛ").0, VowelClass::Unknown);
        assert_eq!(classify_vowels(&w(&["beet", "bet"]), &l, "i", "ɛ").0, VowelClass::Mixed);
        let (c, third) = classify_vowels(&w(&["story"]), &l, "o", "ɛ");
        assert_eq!(c, VowelClass::XiVowel);
        assert_eq!(third, BTreeSet::from(["i".to_string()]));
        assert_eq!(classify_vowels(&w(&["cat"]), &l, "o", "ɛ").0, VowelClass::ThirdParty);
    }

    #[test]
    fn word_extraction() {
        let l = lex();
        assert_eq!(extract_words(" Beet, feet\n- zzz meet.", &l), vec!["beet", "feet", "meet"]);
    }

    #[test]
    fn transition() {
        use VowelClass::*;
        let rows: Vec<_> = [(0.0, XiVowel), (2.0, XiVowel), (4.0, MuVowel), (6.0, MuVowel)]
            .into_iter()
            .map(|(c, k)| row(c, k))
            .collect();
        assert_eq!(transition_curve(&rows).c_switch, Some(4.0));
        let rows: Vec<_> = [(0.0, XiVowel), (2.0, MuVowel), (4.0, ThirdParty), (6.0, MuVowel)]
            .into_iter()
            .map(|(c, k)| row(c, k))
            .collect();
        let t = transition_curve(&rows);
        assert_eq!(t.c_switch, Some(6.0));
        assert_eq!(t.third_party_cs, vec![4.0]);
        assert_eq!(transition_curve(&[row(0.0, XiVowel)]).c_switch, None);
    }

    #[test]
    fn spec_validation() {
        let l = lex();
        assert!(InterventionSpec::new("leet", "i", "ɛ").validate(&l).is_ok());
        assert!(matches!(InterventionSpec::new("leet", "i", "t").validate(&l), Err(Error::Spec(_))));
        assert!(matches!(InterventionSpec::new("leet", "i", "i").validate(&l), Err(Error::Spec(_))));
        assert!(matches!(InterventionSpec::new("leet", "æ", "ɛ").validate(&l), Err(Error::Spec(_))));
        assert!(matches!(InterventionSpec::new("story", "o", "ɛ").validate(&l), Err(Error::Spec(_))));
        let mut s = InterventionSpec::new("leet", "i", "ɛ");
        s.c_grid = vec![0.0, 4.0, 2.0];
        assert!(s.validate(&l).is_err());
    }

    #[test]
    fn coloring_marks_vowels() {
        let l = lex();
        let mut r = row(0.0, VowelClass::Mixed);
        r.words = vec!["beet".into(), "bet".into(), "cat".into()];
        let s = render_colored(&[r], &l, "i", "ɛ");
        assert!(s.contains(&format!("{BLUE}beet{RESET}")));
        assert!(s.contains(&format!("{RED}bet{RESET}")));
        assert!(s.contains(" cat "));
    }
}
