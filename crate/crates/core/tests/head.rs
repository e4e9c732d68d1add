// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use phonolens::head_analysis::{
    coherence, decode_head_for_word, head_dim_coverage, kept_dims, rime_spelling, sparsity_of_z,
    summarize_triplet, survey, token_word, triplet_ablation_study, word_list_hash, SparsityMode,
};
use phonolens::model::planted::{self, PlantedSpec};
use phonolens::model::{make_tiny_model, HeadId};
use phonolens::Error;
use proptest::prelude::*;

#[test]
fn token_words_are_normalized() {
    assert_eq!(token_word(" Keen"), "keen");
    assert_eq!(token_word("een"), "een");
    assert_eq!(rime_spelling("spoon"), "oon");
}

#[test]
fn planted_copy_head_decodes_to_its_vowel() {
    let p = planted::build(PlantedSpec::default());
    let d = decode_head_for_word(&p.model, &p.lexicon, "clean", p.spec.copy_head, 12).unwrap();
    assert_eq!(d.top[0].id, p.answer_tokens["i"]);
    assert_eq!(d.result.len(), p.model.config.d_model);
    let _ = coherence(&d, &p.lexicon);
}

#[test]
fn survey_accounts_for_every_word() {
    let p = planted::build(PlantedSpec::default());
    let words: Vec<String> = ["clean", "plush", "track", "moon", "zzz"].map(String::from).to_vec();
    let t = survey(&p.model, &p.lexicon, &words, p.spec.copy_head).unwrap();
    assert_eq!(t.total(), t.sample_size);
    assert_eq!(t.sample_size + t.errors.len(), words.len());
    assert_eq!(t.word_list_hash, word_list_hash(&words));
    let f = t.fractions();
    if t.sample_size > 0 {
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn triplet_study_reports_every_subset() {
    let p = planted::build(PlantedSpec::two_layer(0.05, 2));
    let heads = [HeadId::new(1, 0), HeadId::new(1, 1), HeadId::new(0, 0)];
    let words: Vec<String> = ["clean", "plush"].map(String::from).to_vec();
    let reports = triplet_ablation_study(&p.model, &p.lexicon, &words, &heads).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert_eq!(r.baseline.tokens.len(), 2);
        assert_eq!(r.all_ablated.ablated.len(), 3);
        assert_eq!(r.leave_one_out.len(), 3);
        assert!(r.leave_one_out.iter().all(|c| c.ablated.len() == 2));
    }
    let s = summarize_triplet(&reports);
    assert_eq!(s.words, 2);
    assert_eq!(s.leave_one_out_rates.len(), 3);
}

#[test]
fn coverage_at_full_keep_set_is_complete() {
    let m = make_tiny_model(5);
    let d = m.config.d_head;
    let words: Vec<String> = ["clean", "plush"].map(String::from).to_vec();
    let cov = head_dim_coverage(&m, &words, HeadId::new(0, 0), d / 2, SparsityMode::Signed).unwrap();
    assert!(cov.missing.is_empty());
    assert_eq!(cov.covered.len(), d);
}

#[test]
fn zero_z_has_undefined_cosine() {
    let m = make_tiny_model(5);
    let z = vec![0.0; m.config.d_head];
    assert!(matches!(
        sparsity_of_z(&m, &z, HeadId::new(0, 0), 1, SparsityMode::Signed),
        Err(Error::UndefinedCosine)
    ));
}

fn modes() -> impl Strategy<Value = SparsityMode> {
    prop_oneof![Just(SparsityMode::Signed), Just(SparsityMode::Magnitude)]
}

proptest! {
    #[test]
    fn kept_sets_are_nested(half in 1usize..12, seed in prop::collection::vec(-5.0f32..5.0, 24), mode in modes()) {
        let z = &seed[..2 * half];
        let mut prev = BTreeSet::new();
        for n in 1..=half {
            let k = kept_dims(z, n, mode).unwrap();
            prop_assert!(prev.is_subset(&k));
            prop_assert!(k.len() <= 2 * n);
            prev = k;
        }
        prop_assert_eq!(prev.len(), z.len());
        prop_assert!(kept_dims(z, half + 1, mode).is_err());
    }
}
