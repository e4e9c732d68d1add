// SPDX-License-Identifier: MIT OR Apache-2.0

use phonolens::interventions::{
    classify_vowels, extract_words, intervene, rhyme_prompt, to_jsonl, transition_curve, InterventionSpec,
    SweepRow, VowelClass,
};
use phonolens::model::planted::{self, PlantedSpec};
use phonolens::model::Hooks;
use phonolens::phonetics::PronunciationLexicon;
use phonolens::Error;

fn sweep(grid: Vec<f64>) -> (planted::Planted, Vec<SweepRow>) {
    let p = planted::build(PlantedSpec::default());
    let mut spec = InterventionSpec::new("leet", "i", "ɛ");
    spec.c_grid = grid;
    spec.n_continuation_tokens = 3;
    let rows = intervene(&p.model, &p.probe, &p.lexicon, &spec).unwrap();
    (p, rows)
}

#[test]
fn zero_edit_matches_clean_generation() {
    let (p, rows) = sweep(vec![0.0, 1.0]);
    let tokens = p.model.encode_prompt(&rhyme_prompt("leet")).unwrap();
    let clean = p.model.generate(&tokens, &Hooks::default(), 3).unwrap();
    assert_eq!(rows[0].continuation, p.model.tokenizer.decode(&clean));
    assert_eq!(rows[0].top_token, clean[0]);
}

#[test]
fn large_edit_switches_to_the_target_vowel() {
    let (p, rows) = sweep((0..=10).map(|i| 2.0 * f64::from(i)).collect());
    assert_eq!(rows[0].top_token, p.answer_tokens["i"]);
    assert_eq!(rows.last().unwrap().top_token, p.answer_tokens["ɛ"]);
    let curve = transition_curve(&rows);
    let switch = curve.c_switch.expect("sweep ends on the target vowel");
    assert!(switch > 0.0 && switch <= 20.0);
}

#[test]
fn jsonl_has_one_line_per_grid_value() {
    let (_, rows) = sweep(vec![0.0, 2.0, 4.0]);
    let text = to_jsonl(&rows);
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["c"].is_number());
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let lex = PronunciationLexicon::mini();
    let bad = [
        InterventionSpec::new("leet", "i", "i"),
        InterventionSpec::new("leet", "t", "ɛ"),
        InterventionSpec::new("leet", "æ", "ɛ"),
        InterventionSpec::new("story", "o", "ɛ"),
        InterventionSpec {
            c_grid: vec![1.0, 2.0],
            ..InterventionSpec::new("leet", "i", "ɛ")
        },
        InterventionSpec {
            c_grid: vec![0.0, 2.0, 2.0],
            ..InterventionSpec::new("leet", "i", "ɛ")
        },
    ];
    for spec in bad {
        assert!(matches!(spec.validate(&lex), Err(Error::Spec(_))), "{spec:?}");
    }
    assert!(InterventionSpec::new("leet", "i", "ɛ").validate(&lex).is_ok());
}

#[test]
fn classification_votes_by_word() {
    let lex = PronunciationLexicon::mini();
    let words = extract_words("bet, set and keen!", &lex);
    assert_eq!(words, ["bet", "set", "keen"]);
    let (class, third) = classify_vowels(&words, &lex, "i", "ɛ");
    assert_eq!(class, VowelClass::MuVowel);
    assert!(third.is_empty());
    let (tie, _) = classify_vowels(&["bet".into(), "keen".into()], &lex, "i", "ɛ");
    assert_eq!(tie, VowelClass::Mixed);
    let (none, _) = classify_vowels(&[], &lex, "i", "ɛ");
    assert_eq!(none, VowelClass::Unknown);
    let (other, third) = classify_vowels(&["cat".into()], &lex, "i", "ɛ");
    assert_eq!(other, VowelClass::ThirdParty);
    assert!(third.contains("æ"));
}
