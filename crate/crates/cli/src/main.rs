// SPDX-License-Identifier: MIT OR Apache-2.0

//! `phonolens` command-line driver.

mod commands;
mod context;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use phonolens::artifacts::CACHE_ENV;
use phonolens::config::{ModelKind, RunConfig};
use phonolens::Error;

#[derive(Parser)]
#[command(name = "phonolens", version, about = "Phonetic probing, patching and head analysis for decoder-only language models")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cache and artifact directory (overrides the config and the environment).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
    /// Reference checkpoint directory.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Pronunciation lexicon (WikiPron TSV).
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Tiny,
    Planted,
    Reference,
}

#[derive(Subcommand)]
pub enum Command {
    /// Inspect the pronunciation lexicon.
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Train and evaluate the phoneme probe.
    #[command(subcommand)]
    Probe(ProbeCmd),
    /// Sweep an embedding-space vowel intervention.
    Intervene(InterveneArgs),
    /// Activation patching.
    #[command(subcommand)]
    Patch(PatchCmd),
    /// Single-head analyses.
    #[command(subcommand)]
    Head(HeadCmd),
    /// PCA geometry of head result vectors.
    #[command(subcommand)]
    Geometry(GeometryCmd),
    /// Run the reference-model pipeline.
    Reproduce {
        #[arg(long, value_enum, default_value = "all")]
        stage: Stage,
    },
    /// Run the tiny-model invariant suite.
    Selftest,
}

#[derive(Subcommand)]
pub enum LexiconCmd {
    /// Entry, skip and inventory counts.
    Stats,
    /// Pronunciations and rhyme tails of a word.
    Lookup { word: String },
    /// Whether two words rhyme.
    Rhymes { a: String, b: String },
    /// Derive an inventory file from a WikiPron TSV.
    DeriveInventory { wikipron: PathBuf, out: PathBuf },
}

#[derive(Subcommand)]
pub enum ProbeCmd {
    /// Train (or load the cached) probe.
    Train,
    /// Exact match and per-phoneme F1 on one split.
    Eval {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Train and evaluate on random embeddings.
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Args)]
pub struct InterveneArgs {
    #[arg(long)]
    pub word: Option<String>,
    #[arg(long)]
    pub xi: Option<String>,
    #[arg(long)]
    pub mu: Option<String>,
    /// `start:end:step` (inclusive) or a comma-separated list.
    #[arg(long)]
    pub c_grid: Option<String>,
    #[arg(long)]
    pub tokens: Option<usize>,
    /// Print the color-annotated rendering.
    #[arg(long)]
    pub color: bool,
}

#[derive(Subcommand)]
pub enum PatchCmd {
    /// Patch every head and MLP from clean into corrupt runs.
    Scan {
        /// JSON list of word pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Write the grid heatmap here.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Final,
    All,
}

#[derive(Args, Clone, Copy)]
pub struct HeadArg {
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub head: Option<usize>,
}

#[derive(Subcommand)]
pub enum HeadCmd {
    /// Logit-lens tokens of a head's result vector.
    Decode {
        #[arg(long)]
        word: String,
        #[command(flatten)]
        at: HeadArg,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Task pass against coherence over a word sample.
    Survey {
        #[arg(long)]
        words: Option<PathBuf>,
        #[arg(short, long)]
        n: Option<usize>,
        #[command(flatten)]
        at: HeadArg,
    },
    /// Cosine of the result vector rebuilt from the top z entries.
    Sparsity {
        #[arg(long)]
        word: String,
        #[command(flatten)]
        at: HeadArg,
        #[arg(short, long)]
        n: Option<usize>,
        #[arg(long)]
        by_magnitude: bool,
    },
    /// z dimensions kept by any word at a given sparsity.
    Coverage {
        #[arg(long)]
        words: Option<PathBuf>,
        #[command(flatten)]
        at: HeadArg,
        #[arg(short, long)]
        n: Option<usize>,
        #[arg(long)]
        by_magnitude: bool,
    },
    /// Continuations with a head set and its leave-one-out subsets ablated.
    AblateTriplet {
        #[arg(long)]
        words: Option<PathBuf>,
        /// Heads as `layer.head`; defaults to the reference triplet.
        #[arg(long = "ablate", value_delimiter = ',')]
        heads: Vec<String>,
    },
    /// Weights-only composition score between two heads.
    Composition {
        /// Upstream head, `layer.head`.
        #[arg(long)]
        up: String,
        /// Downstream head, `layer.head`.
        #[arg(long)]
        down: String,
        #[arg(long, default_value = "q")]
        mode: String,
    },
}

#[derive(Subcommand)]
pub enum GeometryCmd {
    /// Collect result vectors over a word list.
    Collect {
        #[arg(long)]
        words: Option<PathBuf>,
        #[command(flatten)]
        at: HeadArg,
    },
    /// Fit PCA on the collected result vectors.
    Fit {
        #[arg(short)]
        k: Option<usize>,
        #[command(flatten)]
        at: HeadArg,
    },
    /// Vowel and voicing geometry of the projected phoneme vectors.
    Report {
        #[command(flatten)]
        at: HeadArg,
        /// Write vowel and consonant scatter plots into this directory.
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Rescaled result vectors against phoneme vectors.
    Overlay {
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        shift: Option<f64>,
        #[command(flatten)]
        at: HeadArg,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Probe,
    Patch,
    Head,
    Geometry,
    All,
}

fn effective_config(cli: &Cli) -> phonolens::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.model {
        cfg.model.kind = match m {
            ModelArg::Tiny => ModelKind::Tiny,
            ModelArg::Planted => ModelKind::Planted,
            ModelArg::Reference => ModelKind::Reference,
        };
    }
    if let Some(w) = &cli.weights {
        cfg.model.path = Some(w.clone());
        if cli.model.is_none() {
            cfg.model.kind = ModelKind::Reference;
        }
    }
    if let Some(l) = &cli.lexicon {
        cfg.lexicon = Some(l.clone());
    }
    cfg.validate_paths()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::GatedResource(_) => 3,
        Error::Config(_) | Error::Argument(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    phonolens::par::set_sequential(cli.sequential);
    let result = effective_config(&cli).and_then(|cfg| {
        let cache = cli
            .cache
            .clone()
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
            .unwrap_or_else(|| cfg.cache_dir());
        let mut ctx = context::Ctx::new(cfg, cache);
        commands::run(&mut ctx, cli.command)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
