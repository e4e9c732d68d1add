// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;
use std::path::Path;

use rand_free::sample;
use serde_json::{json, Value};

use phonolens::config::ModelKind;
use phonolens::geometry::{
    collect_result_vectors, fit_collection, overlay_result_vectors, project_collection, project_probe,
    render_scatter, voicing_geometry_report, vowel_geometry_report, PcaModel, ResultMatrix, Series,
};
use phonolens::head_analysis::{
    coherence, decode_head_for_word, head_dim_coverage, select_survey_words, summarize_triplet, survey,
    triplet_ablation_study, z_sparsity, SparsityMode, SurveyTable, DEFAULT_TRIPLET,
};
use phonolens::interventions::{intervene, render_colored, to_jsonl, transition_curve, InterventionSpec};
use phonolens::model::{reference, CompositionMode, HeadId};
use phonolens::patching::{
    default_pair_words, load_pair_words, make_pairs, patch_scan, render_heatmap, top_components, PatchGrid,
    PositionMode,
};
use phonolens::phonetics::derive_inventory;
use phonolens::probe::{evaluate_probe, random_embedding_baseline, SplitSel};
use phonolens::selftest;
use phonolens::{Error, Result};

use crate::context::Ctx;
use crate::{
    Command, GeometryCmd, HeadArg, HeadCmd, InterveneArgs, LexiconCmd, ModeArg, PatchCmd, ProbeCmd, SplitArg, Stage,
};

/// Seeded subsampling without pulling a RNG into the CLI.
mod rand_free {
    /// Deterministic pseudo-random sample of up to `n` items (splitmix64 keys).
    pub fn sample(items: &[String], n: usize, seed: u64) -> Vec<String> {
        let mut keyed: Vec<(u64, &String)> = items
            .iter()
            .enumerate()
            .map(|(i, w)| (splitmix(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)), w))
            .collect();
        keyed.sort();
        keyed.into_iter().take(n).map(|(_, w)| w.clone()).collect()
    }

    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

fn emit(path: &Path, payload: &Value) {
    eprintln!("artifact: {}", path.display());
    println!("{}", serde_json::to_string_pretty(payload).expect("json"));
}

fn head_of(ctx: &Ctx, at: HeadArg) -> HeadId {
    HeadId::new(
        at.layer.unwrap_or(ctx.cfg.head.layer),
        at.head.unwrap_or(ctx.cfg.head.head),
    )
}

fn parse_head(s: &str) -> Result<HeadId> {
    let (l, h) = s
        .split_once('.')
        .ok_or_else(|| Error::Argument(format!("expected layer.head, got {s:?}")))?;
    let p = |x: &str| x.parse::<usize>().map_err(|_| Error::Argument(format!("bad head {s:?}")));
    Ok(HeadId::new(p(l)?, p(h)?))
}

pub fn parse_c_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Argument(format!("bad c grid {s:?}"));
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step.is_nan() || step <= 0.0 || b < a {
                return Err(bad());
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + step * i as f64).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(bad()),
    }
}

fn single_token_words(ctx: &mut Ctx) -> Result<Vec<String>> {
    let (m, l) = ctx.resources()?;
    Ok(m.single_token_words(l))
}

fn word_list(ctx: &mut Ctx, file: Option<&Path>) -> Result<Vec<String>> {
    match file {
        Some(p) => Ctx::read_words(p),
        None => single_token_words(ctx),
    }
}

pub fn run(ctx: &mut Ctx, cmd: Command) -> Result<u8> {
    match cmd {
        Command::Lexicon(c) => lexicon(ctx, c),
        Command::Probe(c) => probe(ctx, c),
        Command::Intervene(a) => intervene_cmd(ctx, a),
        Command::Patch(PatchCmd::Scan { pairs, mode, heatmap }) => {
            let mode = mode.map(|m| match m {
                ModeArg::Final => PositionMode::Final,
                ModeArg::All => PositionMode::All,
            });
            let (path, v) = patch(ctx, pairs.as_deref(), mode)?;
            if let Some(h) = heatmap {
                let grid: PatchGrid = serde_json::from_value(v["grid"].clone())?;
                render_heatmap(&grid, &h)?;
            }
            emit(&path, &v);
            Ok(0)
        }
        Command::Head(c) => head(ctx, c),
        Command::Geometry(c) => geometry(ctx, c),
        Command::Reproduce { stage } => reproduce(ctx, stage),
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(u8::from(checks.iter().any(|c| !c.passed)))
        }
    }
}

fn lexicon(ctx: &mut Ctx, cmd: LexiconCmd) -> Result<u8> {
    let out = match cmd {
        LexiconCmd::Stats => {
            let l = ctx.lexicon()?;
            json!({
                "entries": l.len(),
                "skipped": l.skipped(),
                "inventory_version": l.inventory().version(),
                "inventory_hash": l.inventory().hash(),
            })
        }
        LexiconCmd::Lookup { word } => {
            let l = ctx.lexicon()?;
            json!({
                "word": word,
                "pronunciations": l.pronunciations(&word)?,
                "vowels": l.vowels(&word)?,
                "rhyme_tails": l.rhyme_tails(&word)?.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
                "unique_vowel": l.unique_vowel(&word),
            })
        }
        LexiconCmd::Rhymes { a, b } => {
            let l = ctx.lexicon()?;
            json!({ "rhymes": l.rhymes(&a, &b)?, "sufficiently_different": l.sufficiently_different(&a, &b)? })
        }
        LexiconCmd::DeriveInventory { wikipron, out } => {
            let base = ctx.cfg.load_inventory()?;
            let inv = derive_inventory(&wikipron, &base)?;
            inv.save(&out)?;
            json!({ "written": out, "version": inv.version(), "hash": inv.hash() })
        }
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn probe(ctx: &mut Ctx, cmd: ProbeCmd) -> Result<u8> {
    let (path, v) = match cmd {
        ProbeCmd::Train => ctx.artifact("probe_train", json!({}), |ctx| {
            let (stem, p) = ctx.train_probe()?;
            let ds = ctx.dataset()?;
            Ok(json!({
                "probe": stem,
                "words": ds.len(),
                "final_loss": p.meta.final_loss,
                "train": evaluate_probe(&p, &ds, SplitSel::Train),
                "test": evaluate_probe(&p, &ds, SplitSel::Test),
            }))
        })?,
        ProbeCmd::Eval { split } => {
            let sel = match split {
                SplitArg::Train => SplitSel::Train,
                SplitArg::Test => SplitSel::Test,
                SplitArg::All => SplitSel::All,
            };
            ctx.artifact("probe_eval", json!({ "split": sel }), |ctx| {
                let p = ctx.probe()?;
                let ds = ctx.dataset()?;
                Ok(evaluate_probe(&p, &ds, sel))
            })?
        }
        ProbeCmd::Baseline => ctx.artifact("probe_baseline", json!({}), |ctx| {
            let p = ctx.probe()?;
            let ds = ctx.dataset()?;
            let inv = ctx.lexicon()?.inventory().clone();
            let (_, base) = random_embedding_baseline(&ds, &inv, ctx.cfg.seed, &ctx.cfg.probe_config())?;
            Ok(json!({
                "real": { "train": evaluate_probe(&p, &ds, SplitSel::Train), "test": evaluate_probe(&p, &ds, SplitSel::Test) },
                "random": base,
            }))
        })?,
    };
    emit(&path, &v);
    Ok(0)
}

fn intervene_cmd(ctx: &mut Ctx, a: InterveneArgs) -> Result<u8> {
    let c = &ctx.cfg.intervene;
    let spec = InterventionSpec {
        word: a.word.unwrap_or_else(|| c.word.clone()),
        xi: a.xi.unwrap_or_else(|| c.xi.clone()),
        mu: a.mu.unwrap_or_else(|| c.mu.clone()),
        c_grid: match a.c_grid {
            Some(g) => parse_c_grid(&g)?,
            None => c.c_grid.clone(),
        },
        n_continuation_tokens: a.tokens.unwrap_or(c.n_tokens),
    };
    let params = serde_json::to_value(&spec)?;
    let (path, v) = ctx.artifact("intervene", params.clone(), |ctx| {
        let probe = ctx.probe()?;
        let (m, l) = ctx.resources()?;
        let rows = intervene(m, &probe, l, &spec)?;
        Ok(json!({ "spec": spec, "curve": transition_curve(&rows), "rows": rows }))
    })?;
    let rows: Vec<phonolens::interventions::SweepRow> = serde_json::from_value(v["rows"].clone())?;
    let jsonl = ctx.artifact_path("intervene", &params, "jsonl")?;
    phonolens::artifacts::write_atomic(&jsonl, to_jsonl(&rows).as_bytes())?;
    eprintln!("artifact: {}", path.display());
    eprintln!("artifact: {}", jsonl.display());
    print!("{}", to_jsonl(&rows));
    if a.color {
        let l = ctx.lexicon()?;
        print!("{}", render_colored(&rows, l, &spec.xi, &spec.mu));
    }
    Ok(0)
}

fn patch(ctx: &mut Ctx, pairs: Option<&Path>, mode: Option<PositionMode>) -> Result<(std::path::PathBuf, Value)> {
    let words = match pairs.or(ctx.cfg.patch.pairs.as_deref()) {
        Some(p) => load_pair_words(p)?,
        None => default_pair_words(),
    };
    let mode = mode.unwrap_or(ctx.cfg.patch.mode);
    ctx.artifact("patch_scan", json!({ "pairs": words, "mode": mode }), |ctx| {
        let (m, l) = ctx.resources()?;
        let (built, failed) = make_pairs(m, &words, l);
        for (a, b, e) in &failed {
            log::warn!("pair {a}/{b} rejected: {e}");
        }
        let grid = patch_scan(m, &built, mode)?;
        let top: Vec<Value> = top_components(&grid, 10)
            .into_iter()
            .map(|(c, s)| json!({ "component": c.to_string(), "layer": c.layer, "head": c.head, "score": s }))
            .collect();
        Ok(json!({ "mean": grid.mean(), "top": top, "rejected": failed, "grid": grid }))
    })
}

fn head(ctx: &mut Ctx, cmd: HeadCmd) -> Result<u8> {
    let (path, v) = match cmd {
        HeadCmd::Decode { word, at, k } => {
            let h = head_of(ctx, at);
            ctx.artifact("head_decode", json!({ "word": word, "head": h, "k": k }), |ctx| {
                let (m, l) = ctx.resources()?;
                let d = decode_head_for_word(m, l, &word, h, k.max(10))?;
                let coherent = coherence(&d, l).map_err(|e| e.to_string());
                Ok(json!({ "decoded": d, "coherent": coherent }))
            })?
        }
        HeadCmd::Survey { words, n, at } => {
            let h = head_of(ctx, at);
            let n = n.unwrap_or(ctx.cfg.head.survey_size);
            let file = words.or(ctx.cfg.head.words.clone());
            let v = survey_stage(ctx, file.as_deref(), n, h)?;
            let table: SurveyTable = serde_json::from_value(v.1["table"].clone())?;
            eprint!("{}", table.render());
            v
        }
        HeadCmd::Sparsity { word, at, n, by_magnitude } => {
            let h = head_of(ctx, at);
            let n = n.unwrap_or(ctx.cfg.head.n);
            let mode = if by_magnitude { SparsityMode::Magnitude } else { ctx.cfg.head.sparsity_mode };
            ctx.artifact("head_sparsity", json!({ "word": word, "head": h, "n": n, "mode": mode }), |ctx| {
                z_sparsity(ctx.model()?, &word, h, n, mode)
            })?
        }
        HeadCmd::Coverage { words, at, n, by_magnitude } => {
            let h = head_of(ctx, at);
            let n = n.unwrap_or(ctx.cfg.head.n);
            let mode = if by_magnitude { SparsityMode::Magnitude } else { ctx.cfg.head.sparsity_mode };
            let words = word_list(ctx, words.as_deref())?;
            ctx.artifact("head_coverage", json!({ "words": words, "head": h, "n": n, "mode": mode }), |ctx| {
                head_dim_coverage(ctx.model()?, &words, h, n, mode)
            })?
        }
        HeadCmd::AblateTriplet { words, heads } => {
            let heads = if heads.is_empty() {
                DEFAULT_TRIPLET.to_vec()
            } else {
                heads.iter().map(|s| parse_head(s)).collect::<Result<_>>()?
            };
            triplet_stage(ctx, words.as_deref(), &heads)?
        }
        HeadCmd::Composition { up, down, mode } => {
            let (up, down) = (parse_head(&up)?, parse_head(&down)?);
            let mode: CompositionMode = mode.parse()?;
            let score = ctx.model()?.composition_score(up, down, mode)?;
            let v = json!({ "up": up, "down": down, "mode": format!("{mode:?}"), "score": score });
            println!("{}", serde_json::to_string_pretty(&v)?);
            return Ok(0);
        }
    };
    emit(&path, &v);
    Ok(0)
}

fn survey_stage(ctx: &mut Ctx, words: Option<&Path>, n: usize, h: HeadId) -> Result<(std::path::PathBuf, Value)> {
    let candidates = word_list(ctx, words)?;
    let seed = ctx.cfg.seed;
    let chosen = {
        let (m, l) = ctx.resources()?;
        select_survey_words(m, l, &candidates, n, seed)
    };
    ctx.artifact("head_survey", json!({ "words": chosen, "head": h }), |ctx| {
        let (m, l) = ctx.resources()?;
        Ok(json!({ "words": chosen, "table": survey(m, l, &chosen, h)? }))
    })
}

fn triplet_stage(ctx: &mut Ctx, words: Option<&Path>, heads: &[HeadId]) -> Result<(std::path::PathBuf, Value)> {
    let words = match words {
        Some(p) => Ctx::read_words(p)?,
        None => sample(&single_token_words(ctx)?, ctx.cfg.head.triplet_words, ctx.cfg.seed),
    };
    ctx.artifact("head_triplet", json!({ "words": words, "heads": heads }), |ctx| {
        let (m, l) = ctx.resources()?;
        let reports = triplet_ablation_study(m, l, &words, heads)?;
        Ok(json!({ "summary": summarize_triplet(&reports), "reports": reports }))
    })
}

fn collection(ctx: &mut Ctx, h: HeadId, words: Option<&Path>) -> Result<ResultMatrix> {
    let file = words.map(Path::to_path_buf).or(ctx.cfg.geometry.words.clone());
    let words = word_list(ctx, file.as_deref())?;
    let cache = ctx.cache.clone();
    collect_result_vectors(ctx.model()?, &words, h, Some(&cache))
}

fn fitted(ctx: &mut Ctx, h: HeadId, k: usize) -> Result<(ResultMatrix, PcaModel)> {
    let coll = collection(ctx, h, None)?;
    let pca = fit_collection(&coll, k)?;
    Ok((coll, pca))
}

fn xy(points: &[phonolens::geometry::ProjectedPoint], a: usize, b: usize, keep: impl Fn(&str) -> bool) -> Vec<(String, f64, f64)> {
    points
        .iter()
        .filter(|p| keep(&p.label))
        .map(|p| (p.label.clone(), p.coords[a], p.coords[b]))
        .collect()
}

fn geometry(ctx: &mut Ctx, cmd: GeometryCmd) -> Result<u8> {
    let k_default = ctx.cfg.geometry.k;
    let (path, v) = match cmd {
        GeometryCmd::Collect { words, at } => {
            let h = head_of(ctx, at);
            let words = words.clone();
            ctx.artifact("geometry_collect", json!({ "head": h, "words": words }), |ctx| {
                let c = collection(ctx, h, words.as_deref())?;
                Ok(json!({ "rows": c.words.len(), "failed": c.failed, "word_list_hash": c.word_list_hash }))
            })?
        }
        GeometryCmd::Fit { k, at } => {
            let h = head_of(ctx, at);
            let k = k.unwrap_or(k_default);
            let stem = ctx.artifact_path("pca", &json!({ "head": h, "k": k }), "pca")?;
            ctx.artifact("geometry_fit", json!({ "head": h, "k": k }), |ctx| {
                let (_, pca) = fitted(ctx, h, k)?;
                pca.save(&stem, &ctx.hash(), ctx.cfg.seed)?;
                Ok(json!({
                    "pca": stem,
                    "explained_variance_ratio": pca.explained_variance_ratio,
                    "word_list_hash": pca.word_list_hash,
                }))
            })?
        }
        GeometryCmd::Report { at, plots } => {
            let h = head_of(ctx, at);
            let (path, v) = ctx.artifact("geometry_report", json!({ "head": h, "k": k_default }), |ctx| {
                let (_, pca) = fitted(ctx, h, k_default)?;
                let probe = ctx.probe()?;
                let pts = project_probe(&pca, &probe)?;
                let inv = ctx.lexicon()?.inventory().clone();
                Ok(json!({
                    "points": pts,
                    "vowels": vowel_geometry_report(&pts, &inv, (0, 1))?,
                    "voicing": voicing_geometry_report(&pts, &inv, 2)?,
                }))
            })?;
            if let Some(dir) = plots {
                let pts: Vec<phonolens::geometry::ProjectedPoint> = serde_json::from_value(v["points"].clone())?;
                let inv = ctx.lexicon()?.inventory().clone();
                std::fs::create_dir_all(&dir).map_err(|e| Error::Config(e.to_string()))?;
                let vowels = xy(&pts, 0, 1, |s| inv.is_vowel(s));
                let cons = xy(&pts, 1, 2, |s| !inv.is_vowel(s));
                fn one(p: &[(String, f64, f64)]) -> Series<'_> {
                    Series { points: p, color: (30, 60, 200), labelled: true, radius: 3 }
                }
                render_scatter(&[one(&vowels)], "PC1", "PC2", &dir.join("vowels.svg"))?;
                render_scatter(&[one(&cons)], "PC2", "PC3", &dir.join("consonants.svg"))?;
            }
            (path, v)
        }
        GeometryCmd::Overlay { scale, shift, at, plot } => {
            let h = head_of(ctx, at);
            let scale = scale.unwrap_or(ctx.cfg.geometry.scale);
            let shift = shift.unwrap_or(ctx.cfg.geometry.shift);
            let (path, v) = overlay_stage(ctx, h, scale, shift)?;
            if let Some(p) = plot {
                let o: phonolens::geometry::Overlay = serde_json::from_value(v["overlay"].clone())?;
                render_scatter(
                    &[
                        Series { points: &o.results, color: (160, 160, 160), labelled: false, radius: 2 },
                        Series { points: &o.phonemes, color: (200, 30, 30), labelled: true, radius: 4 },
                    ],
                    "PC1",
                    "PC2",
                    &p,
                )?;
            }
            (path, v)
        }
    };
    emit(&path, &v);
    Ok(0)
}

fn overlay_stage(ctx: &mut Ctx, h: HeadId, scale: f64, shift: f64) -> Result<(std::path::PathBuf, Value)> {
    let k = ctx.cfg.geometry.k;
    let n = ctx.cfg.geometry.overlay_words;
    ctx.artifact("geometry_overlay", json!({ "head": h, "k": k, "scale": scale, "shift": shift, "n": n }), |ctx| {
        let (coll, pca) = fitted(ctx, h, k)?;
        let probe = ctx.probe()?;
        let seed = ctx.cfg.seed;
        let l = ctx.lexicon()?;
        let single: Vec<String> = coll.words.iter().filter(|w| l.unique_vowel(w).is_some()).cloned().collect();
        let keep: BTreeSet<String> = sample(&single, n, seed).into_iter().collect();
        let results: Vec<_> = project_collection(&pca, &coll)?
            .into_iter()
            .filter(|p| keep.contains(&p.label))
            .collect();
        let inv = l.inventory().clone();
        let phonemes: Vec<_> = project_probe(&pca, &probe)?
            .into_iter()
            .filter(|p| inv.is_vowel(&p.label))
            .collect();
        Ok(json!({ "words": keep.len(), "overlay": overlay_result_vectors(&results, &phonemes, l, scale, shift, (0, 1))? }))
    })
}

fn line(ok: bool, name: &str, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn reproduce(ctx: &mut Ctx, stage: Stage) -> Result<u8> {
    let dir = match (&ctx.cfg.model.kind, &ctx.cfg.model.path) {
        (ModelKind::Reference, Some(d)) => d.clone(),
        _ => {
            return Err(Error::GatedResource(
                "reproduce needs reference weights (--weights DIR or [model] path)".into(),
            ))
        }
    };
    if !reference::is_available(&dir) {
        return Err(Error::GatedResource(format!("no checkpoint at {}", dir.display())));
    }
    let mut ok = true;
    let want = |s: Stage| stage == Stage::All || stage == s;
    if want(Stage::Probe) {
        let (_, v) = ctx.artifact("probe_baseline", json!({}), |ctx| {
            let p = ctx.probe()?;
            let ds = ctx.dataset()?;
            let inv = ctx.lexicon()?.inventory().clone();
            let (_, base) = random_embedding_baseline(&ds, &inv, ctx.cfg.seed, &ctx.cfg.probe_config())?;
            Ok(json!({
                "real": { "train": evaluate_probe(&p, &ds, SplitSel::Train), "test": evaluate_probe(&p, &ds, SplitSel::Test) },
                "random": base,
            }))
        })?;
        let real = v["real"]["test"]["exact_match"].as_f64().unwrap_or(0.0);
        let rand = v["random"]["test"]["exact_match"].as_f64().unwrap_or(1.0);
        ok &= line((0.90..=0.98).contains(&real), "probe exact match", format!("{real:.3} (accept 0.90-0.98)"));
        ok &= line((0.30..=0.55).contains(&rand), "random baseline", format!("{rand:.3} (accept 0.30-0.55)"));
    }
    if want(Stage::Patch) {
        let (_, v) = patch(ctx, None, Some(PositionMode::Final))?;
        let grid: PatchGrid = serde_json::from_value(v["grid"].clone())?;
        let top = top_components(&grid, 2);
        let first_ok = top[0].0.layer == 12 && top[0].0.head == Some(13) && (0.35..=0.60).contains(&top[0].1);
        ok &= line(first_ok, "patch max cell", format!("{} = {:.3}", top[0].0, top[0].1));
        ok &= line(top[1].1 <= 0.30, "patch second cell", format!("{} = {:.3}", top[1].0, top[1].1));
        ok &= line(grid.mean() <= 0.05, "patch grid mean", format!("{:.4}", grid.mean()));
    }
    if want(Stage::Head) {
        let (_, v) = triplet_stage(ctx, None, &DEFAULT_TRIPLET)?;
        let all = v["summary"]["all_ablated_rate"].as_f64().unwrap_or(1.0);
        let loo: Vec<f64> = serde_json::from_value(v["summary"]["leave_one_out_rates"].clone())?;
        ok &= line(all <= 0.2, "triplet ablation removes rhymes", format!("single-token rhyme rate {all:.2}"));
        ok &= line(
            loo.iter().all(|r| *r >= 0.8),
            "leave-one-out restores rhymes",
            format!("{loo:.2?}"),
        );
        let words = ctx.cfg.head.words.clone();
        let n = ctx.cfg.head.survey_size;
        let (_, v) = survey_stage(ctx, words.as_deref(), n, phonolens::head_analysis::MOVER_HEAD)?;
        let t: SurveyTable = serde_json::from_value(v["table"].clone())?;
        let f = t.fractions();
        let largest = f[0] >= f[1] && f[0] >= f[2] && f[0] >= f[3];
        ok &= line(f[1] <= 0.05 && largest, "survey table", format!("{f:.2?}"));
    }
    if want(Stage::Geometry) {
        let h = phonolens::head_analysis::MOVER_HEAD;
        let words = word_list(ctx, ctx.cfg.geometry.words.clone().as_deref())?;
        let cov = head_dim_coverage(ctx.model()?, &words, h, 8, SparsityMode::Signed)?;
        ok &= line(cov.missing.is_empty(), "head-dimension coverage", format!("{}/{}", cov.covered.len(), cov.d_head));
        let (_, pca) = fitted(ctx, h, ctx.cfg.geometry.k)?;
        let probe = ctx.probe()?;
        let pts = project_probe(&pca, &probe)?;
        let inv = ctx.lexicon()?.inventory().clone();
        let rep = vowel_geometry_report(&pts, &inv, (0, 1))?;
        let ex = rep.exception_symbols();
        ok &= line(ex.contains(&"a") && ex.contains(&"ɪ"), "vowel exceptions", format!("{ex:?}"));
        let (scale, shift) = (ctx.cfg.geometry.scale, ctx.cfg.geometry.shift);
        let (_, v) = overlay_stage(ctx, h, scale, shift)?;
        let acc = v["overlay"]["centroid_accuracy"].as_f64().unwrap_or(0.0);
        ok &= line(acc >= 0.7, "overlay centroid accuracy", format!("{acc:.2}"));
    }
    Ok(u8::from(!ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_grid_forms() {
        assert_eq!(parse_c_grid("0:6:2").unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(parse_c_grid("0,1.5,3").unwrap(), vec![0.0, 1.5, 3.0]);
        assert!(parse_c_grid("0:6:0").is_err());
        assert!(parse_c_grid("a:b").is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let items: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        assert_eq!(sample(&items, 10, 3), sample(&items, 10, 3));
        assert_ne!(sample(&items, 10, 3), sample(&items, 10, 4));
        assert_eq!(sample(&items, 100, 3).len(), 50);
    }

    #[test]
    fn head_syntax() {
        assert_eq!(parse_head("12.13").unwrap(), HeadId::new(12, 13));
        assert!(parse_head("12").is_err());
    }
}
