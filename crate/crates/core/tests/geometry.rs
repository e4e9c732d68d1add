// SPDX-License-Identifier: MIT OR Apache-2.0

use ndarray::Array2;
use phonolens::geometry::{
    affine, collect_result_vectors, collection_stem, fit_collection, fit_pca, kendall_tau, overlay_result_vectors,
    project_collection, project_probe, PcaModel, PointSource, ProjectedPoint,
};
use phonolens::model::planted::{self, PlantedSpec};
use phonolens::model::{make_tiny_model, HeadId};
use phonolens::phonetics::PronunciationLexicon;
use phonolens::Error;
use proptest::prelude::*;

fn words() -> Vec<String> {
    PronunciationLexicon::mini().words().map(String::from).collect()
}

#[test]
fn collection_is_cached_on_disk() {
    let m = make_tiny_model(2);
    let head = HeadId::new(1, 0);
    let dir = tempfile::tempdir().unwrap();
    let first = collect_result_vectors(&m, &words(), head, Some(dir.path())).unwrap();
    let stem = collection_stem(dir.path(), &m, &words(), head);
    assert!(stem.with_extension("bin").exists());
    let second = collect_result_vectors(&m, &words(), head, Some(dir.path())).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.rows.nrows() + first.failed.len(), words().len());
}

#[test]
fn mostly_failing_collection_is_an_error() {
    let m = make_tiny_model(2);
    let bad: Vec<String> = ["clean", "qqq", "zzz", "xxx"].map(String::from).to_vec();
    assert!(matches!(
        collect_result_vectors(&m, &bad, HeadId::new(0, 0), None),
        Err(Error::Collection { ok: 1, total: 4 })
    ));
}

#[test]
fn pca_round_trips_through_disk() {
    let m = make_tiny_model(2);
    let coll = collect_result_vectors(&m, &words(), HeadId::new(1, 1), None).unwrap();
    let pca = fit_collection(&coll, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("pca");
    pca.save(&stem, "cfg", 0).unwrap();
    let back = PcaModel::load(&stem).unwrap();
    assert_eq!(back.k(), 4);
    assert_eq!(back.head, Some(HeadId::new(1, 1)));
    for (a, b) in back.components.iter().zip(pca.components.iter()) {
        assert!((a - b).abs() < 1e-6);
    }
    let pts = project_collection(&back, &coll).unwrap();
    assert_eq!(pts.len(), coll.words.len());
}

#[test]
fn rank_deficient_fit_is_an_error() {
    let x = Array2::from_shape_fn((10, 6), |(i, j)| if j == 0 { i as f32 } else { 0.0 });
    assert!(matches!(fit_pca(&x, 2), Err(Error::Rank { rank: 1, k: 2 })));
    assert!(fit_pca(&x, 1).is_ok());
}

#[test]
fn components_have_positive_leading_loading() {
    let x = Array2::from_shape_fn((20, 5), |(i, j)| ((i * 3 + j * 7) % 13) as f32 - 6.0);
    let p = fit_pca(&x, 3).unwrap();
    for row in p.components.rows() {
        let lead = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(lead > 0.0);
    }
    let r = &p.explained_variance_ratio;
    assert!(r.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn planted_probe_projects_every_phoneme() {
    let p = planted::build(PlantedSpec::default());
    let coll = collect_result_vectors(&p.model, &words(), p.spec.copy_head, None).unwrap();
    let pca = fit_collection(&coll, 2).unwrap();
    let pts = project_probe(&pca, &p.probe).unwrap();
    assert_eq!(pts.len(), 44);
    assert!(pts.iter().all(|q| q.source == PointSource::PhonemeVector));
}

fn naive_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += ((x[i] - x[j]) * (y[i] - y[j])).signum();
        }
    }
    s / (n * (n - 1) / 2) as f64
}

#[test]
fn overlay_matches_centroids_to_their_vowel() {
    let lex = PronunciationLexicon::mini();
    let pt = |label: &str, x: f64, y: f64, source| ProjectedPoint {
        label: label.into(),
        coords: vec![x, y],
        source,
    };
    let phon = vec![
        pt("i", 8.0, 8.0, PointSource::PhonemeVector),
        pt("æ", 20.0, 8.0, PointSource::PhonemeVector),
    ];
    let res = vec![
        pt("keen", 0.01, 0.0, PointSource::ResultVector),
        pt("seen", -0.01, 0.0, PointSource::ResultVector),
        pt("back", 0.5, 0.0, PointSource::ResultVector),
    ];
    let o = overlay_result_vectors(&res, &phon, &lex, 25.0, 8.0, (0, 1)).unwrap();
    assert_eq!(o.centroids.len(), 2);
    assert_eq!(o.centroid_accuracy, 1.0);
    assert!(overlay_result_vectors(&res, &phon, &lex, 0.0, 8.0, (0, 1)).is_err());
}

proptest! {
    #[test]
    fn affine_overlay_preserves_distance_ratios(
        a in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
        c in prop::collection::vec(-5.0f64..5.0, 3),
        scale in 0.1f64..50.0,
        shift in -20.0f64..20.0,
    ) {
        let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let (ab, ac) = (d(&a, &b), d(&a, &c));
        prop_assume!(ab > 1e-6 && ac > 1e-6);
        let (ta, tb, tc) = (affine(&a, scale, shift), affine(&b, scale, shift), affine(&c, scale, shift));
        let ratio = d(&ta, &tb) / d(&ta, &tc);
        prop_assert!((ratio - ab / ac).abs() <= 1e-9 * (1.0 + ab / ac));
    }

    #[test]
    fn tau_matches_naive_count_without_ties(perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle()) {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let y: Vec<f64> = perm.iter().map(|&v| v as f64).collect();
        let t = kendall_tau(&x, &y).unwrap();
        prop_assert!((t - naive_tau(&x, &y)).abs() < 1e-12);
    }
}
