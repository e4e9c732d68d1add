// SPDX-License-Identifier: MIT OR Apache-2.0

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use phonolens::geometry::collect_result_vectors;
use phonolens::head_analysis::survey;
use phonolens::model::planted::{self, PlantedSpec};
use phonolens::par;
use phonolens::patching::{default_pair_words, make_pairs, patch_scan, PositionMode};
use phonolens::phonetics::PhonemeInventory;
use phonolens::probe::{evaluate_probe, planted_dataset, train_probe, ProbeConfig, SplitSel};

const MODES: [(&str, bool); 2] = [("sequential", true), ("parallel", false)];

fn bench_patch_scan(c: &mut Criterion) {
    let p = planted::build(PlantedSpec::two_layer(0.05, 3));
    let (pairs, _) = make_pairs(&p.model, &default_pair_words(), &p.lexicon);
    let mut g = c.benchmark_group("patch_scan");
    for (name, seq) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_sequential(seq);
            b.iter(|| patch_scan(&p.model, &pairs, PositionMode::All).unwrap());
        });
    }
    g.finish();
    par::set_sequential(false);
}

fn bench_collection(c: &mut Criterion) {
    let p = planted::build(PlantedSpec::two_layer(0.05, 3));
    let words: Vec<String> = p.lexicon.words().map(String::from).collect();
    let mut g = c.benchmark_group("collect_result_vectors");
    for (name, seq) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_sequential(seq);
            b.iter(|| collect_result_vectors(&p.model, &words, p.spec.copy_head, None).unwrap());
        });
    }
    g.finish();
    par::set_sequential(false);
}

fn bench_survey(c: &mut Criterion) {
    let p = planted::build(PlantedSpec::two_layer(0.05, 3));
    let words: Vec<String> = p.lexicon.words().map(String::from).collect();
    let mut g = c.benchmark_group("survey");
    g.sample_size(20);
    for (name, seq) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_sequential(seq);
            b.iter(|| survey(&p.model, &p.lexicon, &words, p.spec.copy_head).unwrap());
        });
    }
    g.finish();
    par::set_sequential(false);
}

fn bench_probe_eval(c: &mut Criterion) {
    let inv = PhonemeInventory::english();
    let ds = planted_dataset(5000, inv.len(), 256, 0.1, 1).unwrap();
    let cfg = ProbeConfig {
        epochs: 2,
        ..ProbeConfig::default()
    };
    let probe = train_probe(&ds, &inv, &cfg).unwrap();
    let mut g = c.benchmark_group("evaluate_probe");
    for (name, seq) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::set_sequential(seq);
            b.iter(|| evaluate_probe(&probe, &ds, SplitSel::All));
        });
    }
    g.finish();
    par::set_sequential(false);
}

criterion_group!(benches, bench_patch_scan, bench_collection, bench_survey, bench_probe_eval);
criterion_main!(benches);
