// SPDX-License-Identifier: MIT OR Apache-2.0

//! Characterization of a single attention head: logit-lens decoding of its
//! result vector, an automated coherence judge, the coherence × task survey,
//! z-sparsity, head-dimension coverage, and multi-head ablations.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifacts::sha256_hex;
use crate::error::{Error, Result};
use crate::interventions::rhyme_prompt;
use crate::model::{top_k, ActivationAddress, HeadId, Model, TokenScore};
use crate::par;
use crate::phonetics::{normalize_word, PronunciationLexicon, RhymeTail};

/// Heads whose joint ablation removes single-token rhymes in the reference model.
pub const DEFAULT_TRIPLET: [HeadId; 3] = [HeadId::new(12, 13), HeadId::new(14, 21), HeadId::new(14, 22)];

/// Phoneme mover head of the reference model.
pub const MOVER_HEAD: HeadId = HeadId::new(12, 13);

pub const COHERENCE_WINDOW: usize = 10;
pub const COHERENCE_MIN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedResultVector {
    pub word: String,
    pub head: HeadId,
    pub top: Vec<TokenScore>,
    pub tail: Option<RhymeTail>,
    pub result: Vec<f32>,
}

/// Final-position z of `head` on the rhyme prompt for `word`.
pub fn head_z_for_word(model: &Model, word: &str, head: HeadId) -> Result<Vec<f32>> {
    model.check_head(head)?;
    if model.word_token(word).is_none() {
        return Err(Error::Tokenization(format!("{word:?} is not a single token")));
    }
    let prompt = rhyme_prompt(word);
    let n = model.encode_prompt(&prompt)?.len();
    let addr = ActivationAddress::head_z(head.layer, head.head, n - 1);
    let run = model.run_with_capture(&prompt, &BTreeSet::from([addr]))?;
    Ok(run.get(&addr)?.to_vec())
}

/// Final-position result vector of `head` for `word`.
pub fn result_vector_for_word(model: &Model, word: &str, head: HeadId) -> Result<Vec<f32>> {
    let z = head_z_for_word(model, word, head)?;
    model.head_result_vector(&z, head)
}

pub fn decode_head_for_word(
    model: &Model,
    lexicon: &PronunciationLexicon,
    word: &str,
    head: HeadId,
    k: usize,
) -> Result<DecodedResultVector> {
    let result = result_vector_for_word(model, word, head)?;
    decode_vector(model, lexicon, word, head, result, k)
}

/// Decode an arbitrary result vector as if produced for `word`.
pub fn decode_vector(
    model: &Model,
    lexicon: &PronunciationLexicon,
    word: &str,
    head: HeadId,
    result: Vec<f32>,
    k: usize,
) -> Result<DecodedResultVector> {
    let top = model.logit_lens(&result, k)?;
    let tail = lexicon.rhyme_tails(word).ok().and_then(|t| t.into_iter().next());
    Ok(DecodedResultVector {
        word: word.to_string(),
        head,
        top,
        tail,
        result,
    })
}

/// Token text as a word: leading whitespace stripped, lowercased.
pub fn token_word(token: &str) -> String {
    normalize_word(token.trim_start())
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic()
        || matches!(c, '\u{00C0}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}') && c.is_alphabetic()
}

/// Tokens containing letters from another script are not judged.
fn judgeable(token: &str, lexicon: &PronunciationLexicon) -> bool {
    lexicon.contains(token) || token.chars().all(|c| !c.is_alphabetic() || is_latin_letter(c))
}

fn is_vowel_letter(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Spelling of the rhyming part of `word`: the suffix from its last vowel-letter
/// cluster, ignoring a silent final `e`.
pub fn rime_spelling(word: &str) -> String {
    let w: Vec<char> = normalize_word(word).chars().collect();
    let mut end = w.len();
    if end > 3 && w[end - 1] == 'e' && !is_vowel_letter(w[end - 2]) {
        end -= 1;
    }
    let Some(last) = w[..end].iter().rposition(|&c| is_vowel_letter(c)) else {
        return w.iter().collect();
    };
    let mut start = last;
    while start > 0 && is_vowel_letter(w[start - 1]) && !(start == 1 && w[0] == 'y') {
        start -= 1;
    }
    w[start..].iter().collect()
}

fn similar(token: &str, tail: &RhymeTail, rime: &str, lexicon: &PronunciationLexicon) -> bool {
    if let Ok(prons) = lexicon.pronunciations(token) {
        return prons.iter().any(|p| p.iter().any(|s| s == tail.vowel()));
    }
    let n = token.chars().count();
    if n < 2 || !token.chars().all(char::is_alphabetic) {
        return false;
    }
    if rime.ends_with(token) || token.ends_with(rime) {
        return true;
    }
    // Sub-word fallback: most lexicon words spelled with this ending carry the vowel.
    let mut hits = 0usize;
    let mut total = 0usize;
    for w in lexicon.words().filter(|w| w.ends_with(token) && *w != token) {
        if let Ok(tails) = lexicon.rhyme_tails(w) {
            total += 1;
            hits += usize::from(tails[0].vowel() == tail.vowel());
        }
    }
    total > 0 && 2 * hits > total
}

/// True when at least 5 of the first 10 judgeable tokens share the target's
/// rhyme vowel (by pronunciation) or its rime spelling.
pub fn coherence(decoded: &DecodedResultVector, lexicon: &PronunciationLexicon) -> Result<bool> {
    let tail = decoded
        .tail
        .as_ref()
        .ok_or_else(|| Error::NotFound(format!("{:?} has no rhyme tail", decoded.word)))?;
    let rime = rime_spelling(&decoded.word);
    let tokens: Vec<String> = decoded
        .top
        .iter()
        .map(|t| token_word(&t.token))
        .filter(|t| judgeable(t, lexicon))
        .take(COHERENCE_WINDOW)
        .collect();
    if tokens.len() < COHERENCE_WINDOW {
        return Err(Error::InsufficientTokens {
            got: tokens.len(),
            need: COHERENCE_WINDOW,
        });
    }
    let hits = tokens.iter().filter(|t| similar(t, tail, &rime, lexicon)).count();
    Ok(hits >= COHERENCE_MIN)
}

/// True when one of the top-10 next tokens is a rhyme of `word` other than itself.
pub fn task_pass(model: &Model, word: &str, lexicon: &PronunciationLexicon) -> Result<bool> {
    let tokens = model.encode_prompt(&rhyme_prompt(word))?;
    let logits = model.run(&tokens, &Default::default())?.logits;
    Ok(top_k(&logits, 10).into_iter().any(|id| {
        let w = token_word(&model.tokenizer.token_str(id));
        lexicon.rhymes(&w, word).unwrap_or(false)
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyTable {
    pub pass_coherent: usize,
    pub pass_incoherent: usize,
    pub fail_coherent: usize,
    pub fail_incoherent: usize,
    pub sample_size: usize,
    pub word_list_hash: String,
    pub errors: Vec<(String, String)>,
}

impl SurveyTable {
    pub fn total(&self) -> usize {
        self.pass_coherent + self.pass_incoherent + self.fail_coherent + self.fail_incoherent
    }

    pub fn fractions(&self) -> [f64; 4] {
        let n = self.sample_size.max(1) as f64;
        [
            self.pass_coherent as f64 / n,
            self.pass_incoherent as f64 / n,
            self.fail_coherent as f64 / n,
            self.fail_incoherent as f64 / n,
        ]
    }

    pub fn render(&self) -> String {
        let [pc, pi, fc, fi] = self.fractions().map(|f| f * 100.0);
        format!(
            "             coherent  incoherent\n\
             task pass    {pc:>6.1}%   {pi:>6.1}%\n\
             task fail    {fc:>6.1}%   {fi:>6.1}%\n\
             n = {} ({} errors)\n",
            self.sample_size,
            self.errors.len()
        )
    }
}

pub fn word_list_hash(words: &[String]) -> String {
    sha256_hex(words.join("\n").as_bytes())
}

/// Coherence × task-pass table over `words`; per-word errors are recorded
/// and excluded from the sample.
pub fn survey(model: &Model, lexicon: &PronunciationLexicon, words: &[String], head: HeadId) -> Result<SurveyTable> {
    if words.is_empty() {
        return Err(Error::Argument("survey needs at least one word".into()));
    }
    model.check_head(head)?;
    let judged = par::map(words, |w| -> Result<(bool, bool)> {
        let decoded = decode_head_for_word(model, lexicon, w, head, 50)?;
        Ok((task_pass(model, w, lexicon)?, coherence(&decoded, lexicon)?))
    });
    let mut t = SurveyTable {
        word_list_hash: word_list_hash(words),
        ..SurveyTable::default()
    };
    for (w, r) in words.iter().zip(judged) {
        match r {
            Ok((true, true)) => t.pass_coherent += 1,
            Ok((true, false)) => t.pass_incoherent += 1,
            Ok((false, true)) => t.fail_coherent += 1,
            Ok((false, false)) => t.fail_incoherent += 1,
            Err(e) => t.errors.push((w.clone(), e.to_string())),
        }
    }
    t.sample_size = t.total();
    Ok(t)
}

/// Seeded sample of `n` words that are single tokens and in the lexicon.
pub fn select_survey_words(
    model: &Model,
    lexicon: &PronunciationLexicon,
    candidates: &[String],
    n: usize,
    seed: u64,
) -> Vec<String> {
    let mut pool: Vec<String> = candidates
        .iter()
        .map(|w| normalize_word(w))
        .filter(|w| lexicon.contains(w) && model.word_token(w).is_some())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pool.truncate(n);
    pool
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityMode {
    /// `n` most positive and `n` most negative entries.
    #[default]
    Signed,
    /// `2n` entries of largest magnitude.
    Magnitude,
}

impl std::str::FromStr for SparsityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Self::Signed),
            "magnitude" => Ok(Self::Magnitude),
            _ => Err(Error::Argument(format!("unknown sparsity mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    pub cosine: f64,
    pub kept: BTreeSet<usize>,
}

/// Indices kept by the sparsification rule (ties broken by index).
pub fn kept_dims(z: &[f32], n: usize, mode: SparsityMode) -> Result<BTreeSet<usize>> {
    if 2 * n > z.len() {
        return Err(Error::Argument(format!("n = {n} exceeds half of d_head = {}", z.len())));
    }
    let mut idx: Vec<usize> = (0..z.len()).collect();
    Ok(match mode {
        SparsityMode::Signed => {
            idx.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
            idx[..n].iter().chain(&idx[z.len() - n..]).copied().collect()
        }
        SparsityMode::Magnitude => {
            idx.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
            idx[..2 * n].iter().copied().collect()
        }
    })
}

pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

/// Cosine between the full result vector and the one rebuilt from the kept z
/// entries. A sparse vector of zero norm scores 0.
pub fn sparsity_of_z(model: &Model, z: &[f32], head: HeadId, n: usize, mode: SparsityMode) -> Result<Sparsity> {
    let kept = kept_dims(z, n, mode)?;
    let full = model.head_result_vector(z, head)?;
    if full.iter().all(|v| *v == 0.0) {
        return Err(Error::UndefinedCosine);
    }
    let sparse_z: Vec<f32> = z
        .iter()
        .enumerate()
        .map(|(i, v)| if kept.contains(&i) { *v } else { 0.0 })
        .collect();
    let sparse = model.head_result_vector(&sparse_z, head)?;
    Ok(Sparsity {
        cosine: cosine(&full, &sparse).unwrap_or(0.0),
        kept,
    })
}

pub fn z_sparsity(model: &Model, word: &str, head: HeadId, n: usize, mode: SparsityMode) -> Result<Sparsity> {
    let z = head_z_for_word(model, word, head)?;
    sparsity_of_z(model, &z, head, n, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: BTreeSet<usize>,
    pub missing: Vec<usize>,
    pub d_head: usize,
    pub errors: Vec<(String, String)>,
}

/// Union over words of the z dimensions kept at sparsity `n`.
pub fn head_dim_coverage(
    model: &Model,
    words: &[String],
    head: HeadId,
    n: usize,
    mode: SparsityMode,
) -> Result<Coverage> {
    model.check_head(head)?;
    let d = model.config.d_head;
    let per_word = par::map(words, |w| head_z_for_word(model, w, head).and_then(|z| kept_dims(&z, n, mode)));
    let mut covered = BTreeSet::new();
    let mut errors = Vec::new();
    for (w, r) in words.iter().zip(per_word) {
        match r {
            Ok(k) => covered.extend(k),
            Err(e) => errors.push((w.clone(), e.to_string())),
        }
    }
    Ok(Coverage {
        missing: (0..d).filter(|i| !covered.contains(i)).collect(),
        covered,
        d_head: d,
        errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub ablated: Vec<HeadId>,
    pub tokens: Vec<u32>,
    pub pieces: Vec<String>,
    /// First generated token is, by itself, a rhyme of the target.
    pub single_token_rhyme: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletReport {
    pub word: String,
    pub baseline: Continuation,
    pub all_ablated: Continuation,
    pub leave_one_out: Vec<Continuation>,
}

fn continuation(
    model: &Model,
    lexicon: &PronunciationLexicon,
    word: &str,
    heads: &BTreeSet<HeadId>,
    n: usize,
) -> Result<Continuation> {
    let (_, tokens) = model.ablate_heads(&rhyme_prompt(word), heads, n)?;
    let pieces: Vec<String> = tokens.iter().map(|&t| model.tokenizer.token_str(t)).collect();
    let single_token_rhyme = pieces
        .first()
        .is_some_and(|p| lexicon.rhymes(&token_word(p), word).unwrap_or(false));
    Ok(Continuation {
        ablated: heads.iter().copied().collect(),
        tokens,
        pieces,
        single_token_rhyme,
    })
}

/// Two-token continuations with no heads, all `heads`, and each
/// leave-one-out subset ablated.
pub fn triplet_ablation_study(
    model: &Model,
    lexicon: &PronunciationLexicon,
    words: &[String],
    heads: &[HeadId],
) -> Result<Vec<TripletReport>> {
    for &h in heads {
        model.check_head(h)?;
    }
    let all: BTreeSet<HeadId> = heads.iter().copied().collect();
    par::map(words, |w| {
        Ok(TripletReport {
            word: w.clone(),
            baseline: continuation(model, lexicon, w, &BTreeSet::new(), 2)?,
            all_ablated: continuation(model, lexicon, w, &all, 2)?,
            leave_one_out: heads
                .iter()
                .map(|h| {
                    let mut s = all.clone();
                    s.remove(h);
                    continuation(model, lexicon, w, &s, 2)
                })
                .collect::<Result<_>>()?,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletSummary {
    pub words: usize,
    pub baseline_rate: f64,
    pub all_ablated_rate: f64,
    pub leave_one_out_rates: Vec<f64>,
}

pub fn summarize_triplet(reports: &[TripletReport]) -> TripletSummary {
    let n = reports.len().max(1) as f64;
    let rate = |f: &dyn Fn(&TripletReport) -> bool| reports.iter().filter(|r| f(r)).count() as f64 / n;
    let k = reports.first().map_or(0, |r| r.leave_one_out.len());
    TripletSummary {
        words: reports.len(),
        baseline_rate: rate(&|r| r.baseline.single_token_rhyme),
        all_ablated_rate: rate(&|r| r.all_ablated.single_token_rhyme),
        leave_one_out_rates: (0..k)
            .map(|i| rate(&|r| r.leave_one_out[i].single_token_rhyme))
            .collect(),
    }
}
