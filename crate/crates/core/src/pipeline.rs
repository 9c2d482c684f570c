//! Retrieve, re-rank, filter and align.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{cost_matrix, dtw, skip_still_frames, AlignmentPath, Side};
use crate::context::{contextualize_optional, ContextualizedSequence};
use crate::draq::{draq_with_optimal, RandomPathConfig};
use crate::error::{Error, Result};
use crate::featureio::{DatasetManifest, FeatureSequence};
use crate::retrieve::{RetrievalIndex, SearchHit};

pub const DEFAULT_TOPK: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.6;
pub const DEFAULT_CACHE_SIZE: usize = 64;

/// Anything that can hand out frame sequences by id.
pub trait SequenceSource: Sync {
    fn sequence(&self, id: &str) -> Result<Arc<FeatureSequence>>;
}

/// All sequences held in memory.
#[derive(Debug, Default, Clone)]
pub struct InMemorySource {
    seqs: HashMap<String, Arc<FeatureSequence>>,
}

impl InMemorySource {
    pub fn new(seqs: impl IntoIterator<Item = FeatureSequence>) -> Self {
        Self {
            seqs: seqs
                .into_iter()
                .map(|s| (s.id().to_owned(), Arc::new(s)))
                .collect(),
        }
    }

    pub fn insert(&mut self, seq: FeatureSequence) {
        self.seqs.insert(seq.id().to_owned(), Arc::new(seq));
    }
}

impl SequenceSource for InMemorySource {
    fn sequence(&self, id: &str) -> Result<Arc<FeatureSequence>> {
        self.seqs
            .get(id)
            .cloned()
            .ok_or_else(|| Error::MissingSequence(id.to_owned()))
    }
}

/// Reads sequences from the files of a manifest on demand and keeps the
/// most recently used ones.
pub struct ManifestSource {
    manifest: DatasetManifest,
    lookup: HashMap<String, usize>,
    cache: Mutex<LruCache<String, Arc<FeatureSequence>>>,
}

impl ManifestSource {
    pub fn new(manifest: DatasetManifest, cache_size: usize) -> Self {
        let lookup = manifest
            .entries
            .iter()
            .enumerate()
            .map(|(k, e)| (e.id.clone(), k))
            .collect();
        let cap = NonZeroUsize::new(cache_size.max(1)).unwrap();
        Self {
            manifest,
            lookup,
            cache: Mutex::new(LruCache::new(cap)),
        }
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }
}

impl SequenceSource for ManifestSource {
    fn sequence(&self, id: &str) -> Result<Arc<FeatureSequence>> {
        if let Some(hit) = self.cache.lock().unwrap().get(id) {
            return Ok(Arc::clone(hit));
        }
        let &k = self
            .lookup
            .get(id)
            .ok_or_else(|| Error::MissingSequence(id.to_owned()))?;
        let seq = Arc::new(self.manifest.load_sequence(&self.manifest.entries[k])?);
        self.cache
            .lock()
            .unwrap()
            .put(id.to_owned(), Arc::clone(&seq));
        Ok(seq)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rerank {
    #[default]
    Draq,
    Dtw,
    /// Keep retrieval order.
    None,
}

impl std::str::FromStr for Rerank {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "draq" => Ok(Rerank::Draq),
            "dtw" => Ok(Rerank::Dtw),
            "none" => Ok(Rerank::None),
            other => Err(Error::InvalidArgument(format!(
                "unknown rerank mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvrConfig {
    pub topk: usize,
    pub random_paths: RandomPathConfig,
    /// Candidates must have DRAQ strictly below this to be selected.
    pub draq_threshold: f64,
    pub rerank: Rerank,
    /// Use contextualized features (otherwise centered raw features).
    pub context: bool,
}

impl Default for AvrConfig {
    fn default() -> Self {
        Self {
            topk: DEFAULT_TOPK,
            random_paths: RandomPathConfig::default(),
            draq_threshold: DEFAULT_THRESHOLD,
            rerank: Rerank::Draq,
            context: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub retrieval_sim: f64,
    pub draq: f64,
    pub dtw_cost: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestMatch {
    pub id: String,
    /// DTW path with still frames of the match removed, so every match
    /// frame appears exactly once.
    pub alignment: AlignmentPath,
    pub draq: f64,
    pub dtw_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvrResult {
    pub query_id: String,
    pub ranked_candidates: Vec<ScoredCandidate>,
    pub best: Option<BestMatch>,
    pub filtered: bool,
}

/// Scores `hits` against `query` on alignment features and orders them by
/// `cfg.rerank`. Scoring runs in parallel; order is deterministic.
pub fn score_candidates(
    query: &FeatureSequence,
    hits: &[SearchHit],
    source: &dyn SequenceSource,
    cfg: &AvrConfig,
) -> Result<Vec<ScoredCandidate>> {
    cfg.random_paths.validate()?;
    let q = contextualize_optional(query, cfg.context);
    let mut scored = hits
        .par_iter()
        .map(|hit| {
            let seq = source.sequence(&hit.id)?;
            let c = cost_matrix(&q, &contextualize_optional(&seq, cfg.context))?;
            let (_, dtw_cost) = dtw(&c);
            let b = draq_with_optimal(
                &c,
                dtw_cost,
                &cfg.random_paths.for_pair(query.id(), &hit.id),
            );
            Ok(ScoredCandidate {
                id: hit.id.clone(),
                retrieval_sim: hit.similarity,
                draq: b.score.value,
                dtw_cost,
                degenerate: b.score.degenerate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    order_candidates(&mut scored, cfg.rerank);
    Ok(scored)
}

/// Sorts by the chosen score, ties by id. `Rerank::None` leaves the input order.
pub fn order_candidates(scored: &mut [ScoredCandidate], rerank: Rerank) {
    match rerank {
        Rerank::Draq => {
            scored.sort_by(|a, b| a.draq.total_cmp(&b.draq).then_with(|| a.id.cmp(&b.id)))
        }
        Rerank::Dtw => scored.sort_by(|a, b| {
            a.dtw_cost
                .total_cmp(&b.dtw_cost)
                .then_with(|| a.id.cmp(&b.id))
        }),
        Rerank::None => {}
    }
}

/// Aligns `query` with the first ranked candidate whose DRAQ is below the
/// threshold, keeping the candidate's timeline unwarped.
pub fn select_best(
    query: &FeatureSequence,
    ranked: &[ScoredCandidate],
    source: &dyn SequenceSource,
    cfg: &AvrConfig,
) -> Result<Option<BestMatch>> {
    let Some(pick) = ranked.iter().find(|c| c.draq < cfg.draq_threshold) else {
        return Ok(None);
    };
    let (path, dtw_cost) = align_pair(query, &*source.sequence(&pick.id)?, cfg.context)?;
    Ok(Some(BestMatch {
        id: pick.id.clone(),
        alignment: skip_still_frames(&path, Side::Second),
        draq: pick.draq,
        dtw_cost,
    }))
}

/// Full DTW path between two raw sequences on alignment features.
pub fn align_pair(
    a: &FeatureSequence,
    b: &FeatureSequence,
    context: bool,
) -> Result<(AlignmentPath, f64)> {
    let fa: ContextualizedSequence = contextualize_optional(a, context);
    let fb = contextualize_optional(b, context);
    Ok(dtw(&cost_matrix(&fa, &fb)?))
}

/// Retrieval candidates for `query`, excluding the query's own id.
pub fn retrieve_candidates(
    index: &RetrievalIndex,
    query: &FeatureSequence,
    topk: usize,
) -> Result<Vec<SearchHit>> {
    if topk == 0 {
        return Err(Error::InvalidArgument("topk must be at least 1".into()));
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let extra = usize::from(index.contains(query.id()));
    let mut hits = index.query_topk(query, topk + extra)?;
    hits.retain(|h| h.id != query.id());
    hits.truncate(topk);
    Ok(hits)
}

pub fn avr_query(
    index: &RetrievalIndex,
    source: &dyn SequenceSource,
    query: &FeatureSequence,
    cfg: &AvrConfig,
) -> Result<AvrResult> {
    let hits = retrieve_candidates(index, query, cfg.topk)?;
    let ranked = score_candidates(query, &hits, source, cfg)?;
    let best = select_best(query, &ranked, source, cfg)?;
    Ok(AvrResult {
        query_id: query.id().to_owned(),
        filtered: best.is_none(),
        ranked_candidates: ranked,
        best,
    })
}
