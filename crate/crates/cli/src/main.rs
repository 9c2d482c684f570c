use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "avrkit", version, about = "Alignable video retrieval toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align two feature files with DTW.
    Align(AlignArgs),
    /// Score the alignability of two feature files.
    Draq(DraqArgs),
    /// Build or query a retrieval index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Retrieve, re-rank and align one query against a dataset.
    Avr(AvrArgs),
    /// Evaluation protocols.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Synthetic corpora.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args, Clone, Copy)]
struct ContextArgs {
    /// Align on contextualized features (default).
    #[arg(long, overrides_with = "no_context")]
    context: bool,
    /// Align on zero-centered raw features instead.
    #[arg(long)]
    no_context: bool,
}

impl ContextArgs {
    fn enabled(self) -> bool {
        !self.no_context
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    PerStep,
    Persistent,
}

#[derive(Args, Clone, Copy)]
struct RandomArgs {
    /// Number of random paths per DRAQ estimate.
    #[arg(long, default_value_t = avr_core::draq::DEFAULT_NUM_PATHS)]
    k: usize,
    /// Base seed for random paths.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random path sampler.
    #[arg(long, value_enum, default_value = "per-step")]
    sampler: Sampler,
}

impl RandomArgs {
    fn config(self) -> Result<avr_core::RandomPathConfig> {
        let mut cfg = avr_core::RandomPathConfig::new(self.k, self.seed)?;
        cfg.mode = match self.sampler {
            Sampler::PerStep => avr_core::SamplerMode::PerStep,
            Sampler::Persistent => avr_core::SamplerMode::Persistent,
        };
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KeepSide {
    Query,
    Target,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Drop still frames so this sequence keeps one tuple per frame.
    #[arg(long, value_enum)]
    keep_unwarped: Option<KeepSide>,
    #[command(flatten)]
    context: ContextArgs,
    /// Output JSON file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DraqArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[command(flatten)]
    random: RandomArgs,
    #[command(flatten)]
    context: ContextArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Embed every clip of a manifest and write an index file.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-k cosine search for one feature file.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 10)]
        topk: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RerankArg {
    Draq,
    Dtw,
    None,
}

#[derive(Args, Clone, Copy)]
struct PipelineArgs {
    /// Retrieval candidates per query.
    #[arg(long, default_value_t = avr_core::pipeline::DEFAULT_TOPK)]
    topk: usize,
    /// DRAQ cut-off for the selected match; `inf` disables filtering.
    #[arg(long, default_value_t = avr_core::pipeline::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "draq")]
    rerank: RerankArg,
    #[command(flatten)]
    random: RandomArgs,
    #[command(flatten)]
    context: ContextArgs,
    /// Sequences kept in memory while scoring.
    #[arg(long, default_value_t = avr_core::pipeline::DEFAULT_CACHE_SIZE)]
    cache_size: usize,
}

impl PipelineArgs {
    fn config(self) -> Result<avr_core::AvrConfig> {
        if self.threshold.is_nan() {
            bail!("threshold must be a number");
        }
        Ok(avr_core::AvrConfig {
            topk: self.topk,
            random_paths: self.random.config()?,
            draq_threshold: self.threshold,
            rerank: match self.rerank {
                RerankArg::Draq => avr_core::Rerank::Draq,
                RerankArg::Dtw => avr_core::Rerank::Dtw,
                RerankArg::None => avr_core::Rerank::None,
            },
            context: self.context.enabled(),
        })
    }
}

#[derive(Args)]
struct AvrArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CpeArg {
    /// Mean absolute phase-index difference.
    Absolute,
    /// Fraction of frames whose phase changed.
    Mismatch,
}

#[derive(Clone, Copy, ValueEnum)]
enum ApaArg {
    Tuples,
    Frames,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Label cycle consistency (FPE, CPE) over a query manifest.
    Cycle {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Manifest of query clips with label files.
        #[arg(long)]
        queries: PathBuf,
        /// Draw candidates at random from the query's action class.
        #[arg(long)]
        oracle: bool,
        #[arg(long, value_enum, default_value = "absolute")]
        cpe_mode: CpeArg,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean APA of the pairs below each indicator percentile.
    Sweep {
        #[arg(long)]
        pairs: PathBuf,
        /// Comma-separated percentiles in [0, 100].
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "5,10,15,20,25,30,35,40,45,50,55,60,65,70,75,80,85,90,95,100"
        )]
        percentiles: Vec<f64>,
        /// Comma-separated indicators.
        #[arg(long, value_delimiter = ',', default_value = "draq,dtw_cost,neg_tau")]
        indicators: Vec<avr_core::Indicator>,
        #[arg(long, value_enum, default_value = "tuples")]
        apa_mode: ApaArg,
        #[command(flatten)]
        random: RandomArgs,
        #[command(flatten)]
        context: ContextArgs,
        /// Also write per-pair indicator values and APA as JSON.
        #[arg(long)]
        records: Option<PathBuf>,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recall@k with and without DRAQ re-ranking.
    Recall {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Query manifest; every clip of `--manifest` when omitted.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = avr_core::evalbench::DEFAULT_TOPK_RERANK)]
        topk_rerank: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        ks: Vec<usize>,
        #[command(flatten)]
        random: RandomArgs,
        #[command(flatten)]
        context: ContextArgs,
        #[arg(long, default_value_t = avr_core::pipeline::DEFAULT_CACHE_SIZE)]
        cache_size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write a seeded synthetic corpus (features, labels, warps, manifest, pairs).
    Generate {
        /// JSON spec; missing fields take default values.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Start from the mirrored-class recall corpus instead.
        #[arg(long)]
        recall_corpus: bool,
        /// Override the spec seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    write_output(out, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Align(a) => commands::align(a),
        Command::Draq(a) => commands::draq(a),
        Command::Index(IndexCommand::Build { manifest, out }) => {
            commands::index_build(&manifest, &out)
        }
        Command::Index(IndexCommand::Query {
            index,
            query,
            topk,
            out,
        }) => commands::index_query(&index, &query, topk, out.as_deref()),
        Command::Avr(a) => commands::avr(a),
        Command::Eval(EvalCommand::Cycle {
            index,
            manifest,
            queries,
            oracle,
            cpe_mode,
            pipeline,
            out,
        }) => commands::eval_cycle(
            &index,
            &manifest,
            &queries,
            oracle,
            cpe_mode,
            pipeline,
            out.as_deref(),
        ),
        Command::Eval(EvalCommand::Sweep {
            pairs,
            percentiles,
            indicators,
            apa_mode,
            random,
            context,
            records,
            out,
        }) => commands::eval_sweep(commands::SweepArgs {
            pairs,
            percentiles,
            indicators,
            apa_mode,
            random,
            context,
            records,
            out,
        }),
        Command::Eval(EvalCommand::Recall {
            index,
            manifest,
            queries,
            topk_rerank,
            ks,
            random,
            context,
            cache_size,
            out,
        }) => commands::eval_recall(commands::RecallArgs {
            index,
            manifest,
            queries,
            topk_rerank,
            ks,
            random,
            context,
            cache_size,
            out,
        }),
        Command::Synth(SynthCommand::Generate {
            spec,
            recall_corpus,
            seed,
            out,
        }) => commands::synth_generate(spec.as_deref(), recall_corpus, seed, &out),
    }
}
