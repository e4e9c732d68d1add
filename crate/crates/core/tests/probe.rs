// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use phonolens::model::make_tiny_model;
use phonolens::phonetics::{PhonemeInventory, PronunciationLexicon};
use phonolens::probe::{
    build_dataset, build_dataset_with_min, evaluate_at_threshold, evaluate_probe, planted_dataset, train_probe,
    ProbeConfig, ProbeDataset, ProbeMatrix, SplitSel, TrainingMeta,
};
use phonolens::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn fixture_lexicon() -> PronunciationLexicon {
    let tsv = "clean\tk l iː n\nplush\tp l ʌ ʃ\ntrack\tt ɹ æ k\n";
    PronunciationLexicon::from_tsv(tsv, &PhonemeInventory::english()).unwrap()
}

#[test]
fn three_word_fixture_gives_three_rows() {
    let model = make_tiny_model(0);
    let lex = fixture_lexicon();
    let ds = build_dataset_with_min(&model, &lex, 0, 3).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.d_model, model.config.d_model);
    assert!(matches!(
        build_dataset(&model, &lex, 0),
        Err(Error::InsufficientData { got: 3, need: 100 })
    ));
}

#[test]
fn rows_are_raw_embedding_rows() {
    let model = make_tiny_model(0);
    let lex = fixture_lexicon();
    let ds = build_dataset_with_min(&model, &lex, 0, 1).unwrap();
    for row in &ds.rows {
        let id = model.word_token(&row.word).unwrap();
        assert_eq!(row.embedding, model.weights.embed.row(id as usize).to_vec());
        assert_eq!(row.label, lex.multihot(&row.word).unwrap());
    }
}

#[test]
fn probe_round_trips_through_disk() {
    let inv = PhonemeInventory::english();
    let ds = planted_dataset(200, inv.len(), 16, 0.1, 1).unwrap();
    let probe = train_probe(
        &ds,
        &inv,
        &ProbeConfig {
            epochs: 5,
            ..ProbeConfig::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("probe");
    probe.save(&stem, "cfg").unwrap();
    let back = ProbeMatrix::load(&stem).unwrap();
    assert_eq!(back.weights, probe.weights);
    assert_eq!(back.bias, probe.bias);
    assert_eq!(back.symbols, probe.symbols);
}

#[test]
fn training_is_deterministic() {
    let inv = PhonemeInventory::english();
    let ds = planted_dataset(150, inv.len(), 16, 0.1, 4).unwrap();
    let cfg = ProbeConfig {
        epochs: 10,
        ..ProbeConfig::default()
    };
    let a = train_probe(&ds, &inv, &cfg).unwrap();
    let b = train_probe(&ds, &inv, &cfg).unwrap();
    assert_eq!(a.weights, b.weights);
}

#[test]
fn random_weight_probes_score_near_zero_exact_match() {
    let inv = PhonemeInventory::english();
    let ds = planted_dataset(300, inv.len(), 32, 0.1, 2).unwrap();
    let trials = 50;
    let mut total = 0.0;
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_fn((inv.len(), 32), |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v as f32
        });
        let probe = ProbeMatrix::new(w, Array1::zeros(inv.len()), &inv, TrainingMeta::planted());
        total += evaluate_probe(&probe, &ds, SplitSel::All).exact_match;
    }
    assert!(total / (trials as f64) < 0.01);
}

fn trained() -> &'static (ProbeMatrix, ProbeDataset) {
    static CELL: OnceLock<(ProbeMatrix, ProbeDataset)> = OnceLock::new();
    CELL.get_or_init(|| {
        let inv = PhonemeInventory::english();
        let ds = planted_dataset(300, inv.len(), 24, 0.15, 3).unwrap();
        let p = train_probe(
            &ds,
            &inv,
            &ProbeConfig {
                epochs: 20,
                ..ProbeConfig::default()
            },
        )
        .unwrap();
        (p, ds)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_threshold_never_increases_recall(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (probe, ds) = trained();
        let r_lo = evaluate_at_threshold(probe, ds, SplitSel::All, lo).per_phoneme_recall;
        let r_hi = evaluate_at_threshold(probe, ds, SplitSel::All, hi).per_phoneme_recall;
        for (l, h) in r_lo.iter().zip(&r_hi) {
            prop_assert!(h <= l);
        }
    }
}
