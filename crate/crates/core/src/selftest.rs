// SPDX-License-Identifier: MIT OR Apache-2.0

//! Invariant suite on the bundled tiny and planted models. Needs no network
//! access and no reference weights.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::Result;
use crate::geometry::fit_pca;
use crate::head_analysis::{sparsity_of_z, SparsityMode};
use crate::interventions::{intervene, rhyme_prompt, InterventionSpec};
use crate::model::planted::{self, PlantedSpec};
use crate::model::{argmax, make_tiny_model, ActivationAddress, Component, HeadId, Hooks};
use crate::patching::{
    default_pair_words, make_pairs, patch_scan, patch_scan_from, residual_scan, top_components, ComponentRef,
    PatchSource, PositionMode,
};
use crate::phonetics::{PhonemeInventory, PronunciationLexicon};
use crate::probe::{
    evaluate_probe, planted_dataset, random_embedding_baseline, train_probe, ProbeConfig, SplitSel,
};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("probe recovers planted embeddings", probe_planted),
        check("intervention identity and planted flip", intervention),
        check("self-patch grid is zero", self_patch),
        check("full residual patch restores clean run", residual),
        check("planted copy head tops the patch grid", copy_head),
        check("head results sum to attention output", decomposition),
        check("logit lens of final residual matches model", lens),
        check("z-sparsity is exact at full keep set", sparsity),
        check("pca components orthonormal", pca),
    ]
}

fn probe_planted() -> Result<(bool, String)> {
    let inv = PhonemeInventory::english();
    let ds = planted_dataset(600, inv.len(), 64, 0.1, 7)?;
    let cfg = ProbeConfig {
        epochs: 300,
        learning_rate: 0.05,
        ..ProbeConfig::default()
    };
    let probe = train_probe(&ds, &inv, &cfg)?;
    let real = evaluate_probe(&probe, &ds, SplitSel::Train).exact_match;
    let (_, base) = random_embedding_baseline(&ds, &inv, 8, &cfg)?;
    Ok((
        real >= 0.99 && base.test.exact_match <= 0.6,
        format!("train exact {real:.3}, baseline test exact {:.3}", base.test.exact_match),
    ))
}

fn intervention() -> Result<(bool, String)> {
    let p = planted::build(PlantedSpec::default());
    let mut spec = InterventionSpec::new("leet", "i", "ɛ");
    spec.n_continuation_tokens = 4;
    let rows = intervene(&p.model, &p.probe, &p.lexicon, &spec)?;
    let tokens = p.model.encode_prompt(&rhyme_prompt("leet"))?;
    let clean = p.model.generate(&tokens, &Hooks::default(), 4)?;
    let identity = rows[0].continuation == p.model.tokenizer.decode(&clean);
    let mu = p.answer_tokens["ɛ"];
    let flip = rows.iter().find(|r| r.top_token == mu).map(|r| r.c);
    let predicted = f64::from(p.spec.phoneme_scale) / 2.0;
    let ok = identity && flip.is_some_and(|c| (c - predicted).abs() <= 2.0);
    Ok((ok, format!("flip at {flip:?}, predicted {predicted}")))
}

fn planted_pairs(
    spec: PlantedSpec,
) -> Result<(planted::Planted, Vec<crate::patching::PatchPair>)> {
    let p = planted::build(spec);
    let (pairs, _) = make_pairs(&p.model, &default_pair_words(), &p.lexicon);
    Ok((p, pairs))
}

fn self_patch() -> Result<(bool, String)> {
    let (p, pairs) = planted_pairs(PlantedSpec::two_layer(0.05, 3))?;
    let g = patch_scan_from(&p.model, &pairs, PositionMode::All, PatchSource::Corrupt)?;
    Ok((g.max_abs() <= 1e-4, format!("max |cell| {:.2e}", g.max_abs())))
}

fn residual() -> Result<(bool, String)> {
    let (p, pairs) = planted_pairs(PlantedSpec::two_layer(0.05, 3))?;
    let r = residual_scan(&p.model, &pairs, PositionMode::All, PatchSource::Clean)?;
    let worst = r.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    Ok((worst <= 1e-4, format!("max |score - 1| {worst:.2e}")))
}

fn copy_head() -> Result<(bool, String)> {
    let spec = PlantedSpec::two_layer(0.05, 3);
    let head = spec.copy_head;
    let (p, pairs) = planted_pairs(spec)?;
    let g = patch_scan(&p.model, &pairs, PositionMode::Final)?;
    let top = top_components(&g, 1)[0];
    let want = ComponentRef {
        layer: head.layer,
        head: Some(head.head),
    };
    Ok((top.0 == want, format!("top cell {} = {:.3}", top.0, top.1)))
}

fn decomposition() -> Result<(bool, String)> {
    let m = make_tiny_model(11);
    let tokens = m.encode_prompt(&rhyme_prompt("clean"))?;
    let mut capture = BTreeSet::new();
    for l in 0..m.config.n_layers {
        for p in 0..tokens.len() {
            capture.insert(ActivationAddress::layer_scoped(l, Component::AttnOut, p));
            for h in 0..m.config.n_heads {
                capture.insert(ActivationAddress::head_result(l, h, p));
            }
        }
    }
    let out = m.run(
        &tokens,
        &Hooks {
            capture,
            ..Hooks::default()
        },
    )?;
    let mut worst = 0.0f32;
    for l in 0..m.config.n_layers {
        let bias = m.weights.layers[l].o_bias.clone();
        for p in 0..tokens.len() {
            let total = &out.captures[&ActivationAddress::layer_scoped(l, Component::AttnOut, p)];
            let mut sum = vec![0.0f32; m.config.d_model];
            for h in 0..m.config.n_heads {
                for (s, v) in sum.iter_mut().zip(&out.captures[&ActivationAddress::head_result(l, h, p)]) {
                    *s += v;
                }
            }
            if let Some(b) = &bias {
                for (s, v) in sum.iter_mut().zip(b) {
                    *s += v;
                }
            }
            for (a, b) in sum.iter().zip(total) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((worst <= 1e-4, format!("max deviation {worst:.2e}")))
}

fn lens() -> Result<(bool, String)> {
    let m = make_tiny_model(12);
    let lex = PronunciationLexicon::mini();
    let words: Vec<&str> = lex.words().collect();
    let mut agree = 0;
    for w in &words {
        let tokens = m.encode_prompt(&rhyme_prompt(w))?;
        let last = ActivationAddress::layer_scoped(m.config.n_layers - 1, Component::ResidPost, tokens.len() - 1);
        let out = m.run(
            &tokens,
            &Hooks {
                capture: BTreeSet::from([last]),
                ..Hooks::default()
            },
        )?;
        let lens = m.lens_logits(&out.captures[&last])?;
        agree += usize::from(argmax(&lens) == argmax(&out.logits));
    }
    Ok((agree == words.len(), format!("{agree}/{} prompts agree", words.len())))
}

fn sparsity() -> Result<(bool, String)> {
    let m = make_tiny_model(13);
    let head = HeadId::new(1, 1);
    let z = crate::head_analysis::head_z_for_word(&m, "plush", head)?;
    let d = m.config.d_head;
    let cos: Vec<f64> = (1..=d / 2)
        .map(|n| sparsity_of_z(&m, &z, head, n, SparsityMode::Signed).map(|s| s.cosine))
        .collect::<Result<_>>()?;
    let full = (cos[d / 2 - 1] - 1.0).abs() < 1e-6;
    Ok((full, format!("cosines {cos:.4?}")))
}

fn pca() -> Result<(bool, String)> {
    let x = ndarray::Array2::from_shape_fn((30, 8), |(i, j)| ((i * 7 + j * 3) % 11) as f32 - (j as f32) * 0.5);
    let p = fit_pca(&x, 3)?;
    let g = p.components.dot(&p.components.t());
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((g[[i, j]] - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    Ok((worst <= 1e-6, format!("max deviation {worst:.2e}")))
}
