// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use phonolens::model::planted::{self, PlantedSpec};
use phonolens::model::CapturedRun;
use phonolens::patching::{
    default_pair_words, load_pair_words, make_pair, make_pairs, normalized_logit_diff, patch_scan, render_heatmap,
    save_pair_words, top_components, ComponentRef, PatchGrid, PatchPair, PositionMode, DEFAULT_PAIRS,
};
use phonolens::Error;
use proptest::prelude::*;

fn run(logits: Vec<f32>) -> CapturedRun {
    CapturedRun {
        prompt: String::new(),
        tokens: vec![0],
        logits,
        captures: BTreeMap::new(),
    }
}

fn pair(clean: Vec<f32>, corrupt: Vec<f32>) -> PatchPair {
    PatchPair {
        clean_word: "a".into(),
        corrupt_word: "b".into(),
        clean_answer: 0,
        corrupt_answer: 1,
        clean: run(clean),
        corrupt: run(corrupt),
    }
}

#[test]
fn normalization_endpoints() {
    let p = pair(vec![3.0, 1.0, 0.0], vec![1.0, 2.0, 0.0]);
    assert!((normalized_logit_diff(&p.clean.logits, &p).unwrap() - 1.0).abs() < 1e-12);
    assert!(normalized_logit_diff(&p.corrupt.logits, &p).unwrap().abs() < 1e-12);
}

#[test]
fn degenerate_denominator_is_an_error() {
    let p = pair(vec![1.0, 1.0], vec![2.0, 2.0]);
    assert!(matches!(
        normalized_logit_diff(&[0.0, 0.0], &p),
        Err(Error::DegenerateDenominator(_))
    ));
}

#[test]
fn rhyming_pairs_are_refused() {
    let p = planted::build(PlantedSpec::default());
    assert!(matches!(make_pair(&p.model, "clean", "keen", &p.lexicon), Err(Error::Pair(_))));
    assert!(make_pair(&p.model, "clean", "track", &p.lexicon).is_ok());
}

#[test]
fn default_pairs_are_all_sufficiently_different() {
    let lex = phonolens::phonetics::PronunciationLexicon::mini();
    assert_eq!(DEFAULT_PAIRS.len(), 20);
    for (a, b) in DEFAULT_PAIRS {
        assert!(lex.sufficiently_different(a, b).unwrap(), "{a} / {b}");
    }
}

#[test]
fn pair_list_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.json");
    save_pair_words(&path, &default_pair_words()).unwrap();
    assert_eq!(load_pair_words(&path).unwrap(), default_pair_words());
}

#[test]
fn grid_serializes_and_renders() {
    let spec = PlantedSpec::two_layer(0.05, 3);
    let p = planted::build(spec);
    let (pairs, _) = make_pairs(&p.model, &default_pair_words(), &p.lexicon);
    let grid = patch_scan(&p.model, &pairs[..4], PositionMode::Final).unwrap();
    assert_eq!(grid.values.len(), 2);
    assert_eq!(grid.values[0].len(), 3);
    let back: PatchGrid = serde_json::from_str(&serde_json::to_string(&grid).unwrap()).unwrap();
    assert_eq!(back, grid);
    let top = top_components(&grid, 3);
    assert_eq!(top.len(), 3);
    assert!(top.windows(2).all(|w| w[0].1 >= w[1].1));
    assert_eq!(
        top[0].0,
        ComponentRef {
            layer: 1,
            head: Some(0)
        }
    );
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("grid.svg");
    render_heatmap(&grid, &svg).unwrap();
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
}

proptest! {
    #[test]
    fn normalized_diff_ignores_a_shared_logit_offset(
        clean in prop::collection::vec(-10.0f32..10.0, 4),
        corrupt in prop::collection::vec(-10.0f32..10.0, 4),
        patched in prop::collection::vec(-10.0f32..10.0, 4),
        offset in -50.0f32..50.0,
    ) {
        let base = pair(clean.clone(), corrupt.clone());
        prop_assume!(base.denominator().abs() > 1e-2);
        let shift = |v: &[f32]| v.iter().map(|x| x + offset).collect::<Vec<f32>>();
        let moved = pair(shift(&clean), shift(&corrupt));
        let a = normalized_logit_diff(&patched, &base).unwrap();
        let b = normalized_logit_diff(&shift(&patched), &moved).unwrap();
        prop_assert!((a - b).abs() <= 1e-3 * (1.0 + a.abs()));
    }
}
