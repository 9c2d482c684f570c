use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::oracle_candidates;
use super::LabeledSequence;
use crate::align::{warp_labels, AlignmentPath, Side};
use crate::error::{Error, Result};
use crate::featureio::FeatureSequence;
use crate::pipeline::{
    align_pair, retrieve_candidates, score_candidates, select_best, AvrConfig, SequenceSource,
};
use crate::retrieve::{RetrievalIndex, SearchHit};

/// How cycle phase error compares phase indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpeMode {
    /// Mean absolute difference of phase indices.
    #[default]
    AbsoluteIndex,
    /// Fraction of frames whose phase changed.
    MismatchRate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleOptions {
    pub context: bool,
    pub cpe_mode: CpeMode,
    /// Fail instead of skipping CPE when the query has no phases.
    pub require_phases: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleEntry {
    pub query_id: String,
    pub match_id: Option<String>,
    pub fpe: Option<f64>,
    pub cpe: Option<f64>,
    pub filtered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub entries: Vec<CycleEntry>,
    pub mean_fpe: Option<f64>,
    pub mean_cpe: Option<f64>,
    pub evaluated: usize,
    pub filtered: usize,
}

impl CycleReport {
    pub fn from_entries(mut entries: Vec<CycleEntry>) -> Self {
        entries.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        let mean = |vals: Vec<f64>| {
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let mean_fpe = mean(entries.iter().filter_map(|e| e.fpe).collect());
        let mean_cpe = mean(entries.iter().filter_map(|e| e.cpe).collect());
        let filtered = entries.iter().filter(|e| e.filtered).count();
        Self {
            evaluated: entries.len() - filtered,
            filtered,
            mean_fpe,
            mean_cpe,
            entries,
        }
    }
}

/// Cycle errors for a path between a query of `n` frames and a match.
///
/// Query positions `1..n` (and phases, when given) are warped onto the
/// match with the match kept unwarped, then back onto the query with the
/// query kept unwarped, both along `path`. Returns `(fpe, cpe)`.
pub fn cycle_from_path(
    path: &AlignmentPath,
    phases: Option<&[u32]>,
    cpe_mode: CpeMode,
) -> Result<(f64, Option<f64>)> {
    let Some(&(n, _)) = path.tuples().last() else {
        return Err(Error::Empty("alignment path"));
    };
    let positions: Vec<usize> = (1..=n).collect();
    let there = warp_labels(path, &positions, Side::Second)?;
    let back = warp_labels(path, &there.values, Side::First)?;
    let fpe = positions
        .iter()
        .zip(&back.values)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        / n as f64;

    let cpe = match phases {
        None => None,
        Some(ph) => {
            let there = warp_labels(path, ph, Side::Second)?;
            let back = warp_labels(path, &there.values, Side::First)?;
            let err: f64 = ph
                .iter()
                .zip(&back.values)
                .map(|(&a, &b)| match cpe_mode {
                    CpeMode::AbsoluteIndex => (a as f64 - b as f64).abs(),
                    CpeMode::MismatchRate => f64::from(u8::from(a != b)),
                })
                .sum();
            Some(err / n as f64)
        }
    };
    Ok((fpe, cpe))
}

/// Aligns `query` with `matched` once and measures the label cycle.
pub fn cycle_consistency(
    query: &FeatureSequence,
    phases: Option<&[u32]>,
    matched: &FeatureSequence,
    opts: &CycleOptions,
) -> Result<CycleEntry> {
    if opts.require_phases && phases.is_none() {
        return Err(Error::MissingPhases(query.id().to_owned()));
    }
    if let Some(p) = phases {
        if p.len() != query.len() {
            return Err(Error::LengthMismatch {
                expected: query.len(),
                found: p.len(),
            });
        }
    }
    let (path, _) = align_pair(query, matched, opts.context)?;
    let (fpe, cpe) = cycle_from_path(&path, phases, opts.cpe_mode)?;
    Ok(CycleEntry {
        query_id: query.id().to_owned(),
        match_id: Some(matched.id().to_owned()),
        fpe: Some(fpe),
        cpe,
        filtered: false,
    })
}

/// Where candidates for each query come from.
#[derive(Debug, Clone, Copy)]
pub enum CandidateMode<'a> {
    Retrieval,
    /// Random same-action clips; `actions` maps corpus ids to action labels.
    Oracle {
        actions: &'a HashMap<String, String>,
        seed: u64,
    },
}

/// Runs retrieval (or oracle sampling), re-ranking, selection and the
/// cycle measurement for every query. Queries whose candidates are all
/// filtered are reported with `filtered = true`.
pub fn evaluate_cycles(
    index: &RetrievalIndex,
    source: &dyn SequenceSource,
    queries: &[LabeledSequence],
    cfg: &AvrConfig,
    mode: CandidateMode<'_>,
    cpe_mode: CpeMode,
) -> Result<CycleReport> {
    let opts = CycleOptions {
        context: cfg.context,
        cpe_mode,
        require_phases: false,
    };
    let mut entries = Vec::with_capacity(queries.len());
    for q in queries {
        let hits = match mode {
            CandidateMode::Retrieval => retrieve_candidates(index, &q.seq, cfg.topk)?,
            CandidateMode::Oracle { actions, seed } => {
                let action = q
                    .action()
                    .ok_or_else(|| Error::MissingAction(q.id().to_owned()))?;
                let mut rng =
                    ChaCha8Rng::seed_from_u64(crate::draq::pair_seed(seed, q.id(), "oracle"));
                oracle_candidates(actions, q.id(), action, cfg.topk, &mut rng)
                    .into_iter()
                    .map(|id| SearchHit {
                        id,
                        similarity: 0.0,
                    })
                    .collect()
            }
        };
        let ranked = score_candidates(&q.seq, &hits, source, cfg)?;
        let entry = match select_best(&q.seq, &ranked, source, cfg)? {
            None => CycleEntry {
                query_id: q.id().to_owned(),
                match_id: None,
                fpe: None,
                cpe: None,
                filtered: true,
            },
            Some(best) => {
                let matched = source.sequence(&best.id)?;
                cycle_consistency(&q.seq, q.labels.phases.as_deref(), &matched, &opts)?
            }
        };
        entries.push(entry);
    }
    Ok(CycleReport::from_entries(entries))
}
