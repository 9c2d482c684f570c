use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::LabeledSequence;
use crate::error::{Error, Result};
use crate::pipeline::{retrieve_candidates, score_candidates, AvrConfig, Rerank, SequenceSource};
use crate::retrieve::RetrievalIndex;

pub const DEFAULT_TOPK_RERANK: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallTable {
    pub ks: Vec<usize>,
    pub topk_rerank: usize,
    pub queries: usize,
    /// Recall@k in retrieval order.
    pub without_rerank: Vec<f64>,
    /// Recall@k after DRAQ re-ranking of the top `topk_rerank`.
    pub with_rerank: Vec<f64>,
}

/// Fraction of ranked lists whose first `k` entries contain a relevant item.
pub fn recall_at(lists: &[Vec<bool>], k: usize) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    let hits = lists
        .iter()
        .filter(|l| l.iter().take(k).any(|&r| r))
        .count();
    hits as f64 / lists.len() as f64
}

/// Recall@k with and without DRAQ re-ranking. A retrieval counts as a hit
/// when it shares the query's action; `actions` maps index ids to actions.
pub fn rerank_recall(
    index: &RetrievalIndex,
    source: &dyn SequenceSource,
    queries: &[LabeledSequence],
    actions: &HashMap<String, String>,
    topk_rerank: usize,
    ks: &[usize],
    cfg: &AvrConfig,
) -> Result<RecallTable> {
    let cfg = AvrConfig {
        rerank: Rerank::Draq,
        ..*cfg
    };
    let mut before = Vec::with_capacity(queries.len());
    let mut after = Vec::with_capacity(queries.len());
    for q in queries {
        let action = q
            .action()
            .ok_or_else(|| Error::MissingAction(q.id().to_owned()))?;
        let relevant = |id: &str| actions.get(id).is_some_and(|a| a == action);
        let hits = retrieve_candidates(index, &q.seq, topk_rerank)?;
        before.push(hits.iter().map(|h| relevant(&h.id)).collect::<Vec<_>>());
        let ranked = score_candidates(&q.seq, &hits, source, &cfg)?;
        after.push(ranked.iter().map(|c| relevant(&c.id)).collect::<Vec<_>>());
    }
    Ok(RecallTable {
        ks: ks.to_vec(),
        topk_rerank,
        queries: queries.len(),
        without_rerank: ks.iter().map(|&k| recall_at(&before, k)).collect(),
        with_rerank: ks.iter().map(|&k| recall_at(&after, k)).collect(),
    })
}
