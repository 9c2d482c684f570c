use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use avr_core::draq::neg_kendall_tau_from_costs;
use avr_core::evalbench::synth::PairsFile;
use avr_core::evalbench::{
    evaluate_cycles, evaluate_pairs, rerank_recall, sweep_records, ApaMode, CandidateMode, CpeMode,
    LabeledSequence, PairEvalConfig, SyntheticSpec,
};
use avr_core::pipeline::{align_pair, ManifestSource};
use avr_core::{
    contextualize_optional, cost_matrix, load_manifest, load_sequence, skip_still_frames,
    AvrConfig, DatasetManifest, FeatureSequence, Indicator, RetrievalIndex, SequenceLabels, Side,
};

use crate::{
    write_json, write_output, AlignArgs, ApaArg, AvrArgs, ContextArgs, CpeArg, DraqArgs, KeepSide,
    PipelineArgs, RandomArgs,
};

fn read_sequence(path: &Path) -> Result<FeatureSequence> {
    load_sequence(path).with_context(|| format!("reading features {}", path.display()))
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    load_manifest(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn read_index(path: &Path) -> Result<RetrievalIndex> {
    RetrievalIndex::load(path).with_context(|| format!("reading index {}", path.display()))
}

/// Every clip of a manifest with its labels; unlabeled clips get empty labels.
fn load_labeled(manifest: &DatasetManifest) -> Result<Vec<LabeledSequence>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let seq = manifest
                .load_sequence(e)
                .with_context(|| format!("loading {}", e.id))?;
            let labels = manifest
                .load_labels(e)
                .with_context(|| format!("loading labels of {}", e.id))?
                .unwrap_or_else(|| SequenceLabels {
                    id: e.id.clone(),
                    action: None,
                    phases: None,
                });
            labels
                .check_against(&seq)
                .with_context(|| format!("labels of {}", e.id))?;
            Ok(LabeledSequence { seq, labels })
        })
        .collect()
}

fn actions_of(labeled: &[LabeledSequence]) -> HashMap<String, String> {
    labeled
        .iter()
        .filter_map(|l| l.action().map(|a| (l.id().to_owned(), a.to_owned())))
        .collect()
}

#[derive(Serialize)]
struct AlignOutput {
    path: Vec<(usize, usize)>,
    cost: f64,
}

pub fn align(args: AlignArgs) -> Result<()> {
    let q = read_sequence(&args.query)?;
    let t = read_sequence(&args.target)?;
    let (path, cost) = align_pair(&q, &t, args.context.enabled())?;
    let path = match args.keep_unwarped {
        None => path,
        Some(KeepSide::Query) => skip_still_frames(&path, Side::First),
        Some(KeepSide::Target) => skip_still_frames(&path, Side::Second),
    };
    write_json(
        args.out.as_deref(),
        &AlignOutput {
            path: path.into_inner(),
            cost,
        },
    )
}

#[derive(Serialize)]
struct DraqOutput {
    draq: f64,
    dtw_cost: f64,
    neg_tau: f64,
    degenerate: bool,
}

pub fn draq(args: DraqArgs) -> Result<()> {
    let q = read_sequence(&args.query)?;
    let t = read_sequence(&args.target)?;
    let ctx = args.context.enabled();
    let c = cost_matrix(
        &contextualize_optional(&q, ctx),
        &contextualize_optional(&t, ctx),
    )?;
    let cfg = args.random.config()?.for_pair(q.id(), t.id());
    let score = avr_core::draq(&c, &cfg);
    let (_, dtw_cost) = avr_core::dtw(&c);
    write_json(
        args.out.as_deref(),
        &DraqOutput {
            draq: score.value,
            dtw_cost,
            neg_tau: if c.rows() >= 2 {
                neg_kendall_tau_from_costs(&c).value
            } else {
                0.0
            },
            degenerate: score.degenerate,
        },
    )
}

pub fn index_build(manifest: &Path, out: &Path) -> Result<()> {
    let manifest = read_manifest(manifest)?;
    let index = RetrievalIndex::build(&manifest).context("building index")?;
    let flagged = index.stats().flagged();
    if !flagged.is_empty() {
        eprintln!(
            "warning: {} constant embedding dimension(s): {:?}",
            flagged.len(),
            flagged
        );
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    index
        .save(out)
        .with_context(|| format!("writing index {}", out.display()))?;
    eprintln!(
        "indexed {} clips (dimension {})",
        index.len(),
        index.dimension()
    );
    Ok(())
}

#[derive(Serialize)]
struct QueryOutput {
    query_id: String,
    hits: Vec<avr_core::SearchHit>,
}

pub fn index_query(index: &Path, query: &Path, topk: usize, out: Option<&Path>) -> Result<()> {
    let index = read_index(index)?;
    let q = read_sequence(query)?;
    let hits = index.query_topk(&q, topk)?;
    write_json(
        out,
        &QueryOutput {
            query_id: q.id().to_owned(),
            hits,
        },
    )
}

pub fn avr(args: AvrArgs) -> Result<()> {
    let cfg = args.pipeline.config()?;
    let index = read_index(&args.index)?;
    let source = ManifestSource::new(read_manifest(&args.manifest)?, args.pipeline.cache_size);
    let q = read_sequence(&args.query)?;
    let result = avr_core::avr_query(&index, &source, &q, &cfg)?;
    write_json(args.out.as_deref(), &result)
}

pub fn eval_cycle(
    index: &Path,
    manifest: &Path,
    queries: &Path,
    oracle: bool,
    cpe_mode: CpeArg,
    pipeline: PipelineArgs,
    out: Option<&Path>,
) -> Result<()> {
    let cfg: AvrConfig = pipeline.config()?;
    let index = read_index(index)?;
    let manifest = read_manifest(manifest)?;
    let queries = load_labeled(&read_manifest(queries)?)?;
    let actions = if oracle {
        actions_of(&load_labeled(&manifest)?)
    } else {
        HashMap::new()
    };
    let mode = if oracle {
        CandidateMode::Oracle {
            actions: &actions,
            seed: cfg.random_paths.seed,
        }
    } else {
        CandidateMode::Retrieval
    };
    let cpe_mode = match cpe_mode {
        CpeArg::Absolute => CpeMode::AbsoluteIndex,
        CpeArg::Mismatch => CpeMode::MismatchRate,
    };
    let source = ManifestSource::new(manifest, pipeline.cache_size);
    let report = evaluate_cycles(&index, &source, &queries, &cfg, mode, cpe_mode)?;
    write_json(out, &report)
}

pub struct SweepArgs {
    pub pairs: PathBuf,
    pub percentiles: Vec<f64>,
    pub indicators: Vec<Indicator>,
    pub apa_mode: ApaArg,
    pub random: RandomArgs,
    pub context: ContextArgs,
    pub records: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn eval_sweep(args: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.pairs)
        .with_context(|| format!("reading {}", args.pairs.display()))?;
    let pairs: PairsFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.pairs.display()))?;
    if pairs.pairs.is_empty() {
        bail!("{} lists no pairs", args.pairs.display());
    }
    let base = args.pairs.parent().unwrap_or_else(|| Path::new(""));
    let labeled = load_labeled(&read_manifest(&base.join(&pairs.manifest))?)?;
    let by_id: HashMap<&str, &LabeledSequence> = labeled.iter().map(|l| (l.id(), l)).collect();
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| anyhow!("pair references unknown clip {id:?}"))
    };
    let refs = pairs
        .pairs
        .iter()
        .map(|p| Ok((lookup(&p.a)?, lookup(&p.b)?)))
        .collect::<Result<Vec<_>>>()?;
    let cfg = PairEvalConfig {
        context: args.context.enabled(),
        random_paths: args.random.config()?,
        apa_mode: match args.apa_mode {
            ApaArg::Tuples => ApaMode::Tuples,
            ApaArg::Frames => ApaMode::Frames,
        },
    };
    let records = evaluate_pairs(&refs, &cfg)?;
    if let Some(path) = &args.records {
        write_json(Some(path), &records)?;
    }
    let report = sweep_records(&records, &args.indicators, &args.percentiles)?;
    write_output(args.out.as_deref(), &report.to_csv())
}

pub struct RecallArgs {
    pub index: PathBuf,
    pub manifest: PathBuf,
    pub queries: Option<PathBuf>,
    pub topk_rerank: usize,
    pub ks: Vec<usize>,
    pub random: RandomArgs,
    pub context: ContextArgs,
    pub cache_size: usize,
    pub out: Option<PathBuf>,
}

pub fn eval_recall(args: RecallArgs) -> Result<()> {
    let index = read_index(&args.index)?;
    let manifest = read_manifest(&args.manifest)?;
    let corpus = load_labeled(&manifest)?;
    let actions = actions_of(&corpus);
    let queries = match &args.queries {
        Some(path) => load_labeled(&read_manifest(path)?)?,
        None => corpus,
    };
    let cfg = AvrConfig {
        random_paths: args.random.config()?,
        context: args.context.enabled(),
        ..AvrConfig::default()
    };
    let source = ManifestSource::new(manifest, args.cache_size);
    let table = rerank_recall(
        &index,
        &source,
        &queries,
        &actions,
        args.topk_rerank,
        &args.ks,
        &cfg,
    )?;
    write_json(args.out.as_deref(), &table)
}

pub fn synth_generate(
    spec: Option<&Path>,
    recall_corpus: bool,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut spec = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None if recall_corpus => SyntheticSpec::recall_default(),
        None => SyntheticSpec::default(),
    };
    if recall_corpus {
        spec.mirrored_classes = true;
    }
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let corpus = avr_core::evalbench::generate_synthetic(&spec)?;
    let manifest = corpus
        .write(out)
        .with_context(|| format!("writing corpus to {}", out.display()))?;
    eprintln!(
        "wrote {} clips in {} classes to {}",
        manifest.len(),
        spec.classes(),
        out.display()
    );
    Ok(())
}
