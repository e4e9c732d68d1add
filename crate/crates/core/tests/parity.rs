// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sequential and parallel execution give bit-identical results.

use phonolens::geometry::collect_result_vectors;
use phonolens::model::planted::{self, PlantedSpec};
use phonolens::par;
use phonolens::patching::{default_pair_words, make_pairs, patch_scan, PositionMode};
use phonolens::phonetics::PhonemeInventory;
use phonolens::probe::{evaluate_probe, planted_dataset, train_probe, ProbeConfig, SplitSel};

fn everything() -> (Vec<Vec<f64>>, Vec<f32>, Vec<f32>, f64) {
    let p = planted::build(PlantedSpec::two_layer(0.05, 9));
    let (pairs, _) = make_pairs(&p.model, &default_pair_words(), &p.lexicon);
    let grid = patch_scan(&p.model, &pairs, PositionMode::All).unwrap();
    let words: Vec<String> = p.lexicon.words().map(String::from).collect();
    let coll = collect_result_vectors(&p.model, &words, p.spec.copy_head, None).unwrap();
    let inv = PhonemeInventory::english();
    let ds = planted_dataset(300, inv.len(), 16, 0.1, 2).unwrap();
    let probe = train_probe(
        &ds,
        &inv,
        &ProbeConfig {
            epochs: 8,
            ..ProbeConfig::default()
        },
    )
    .unwrap();
    let exact = evaluate_probe(&probe, &ds, SplitSel::All).exact_match;
    (grid.values, coll.rows.into_raw_vec_and_offset().0, probe.weights.into_raw_vec_and_offset().0, exact)
}

#[test]
fn sequential_matches_parallel() {
    par::set_sequential(true);
    let seq = everything();
    par::set_sequential(false);
    let parallel = everything();
    assert_eq!(seq, parallel);
}
