//! Evaluation protocols and the synthetic corpus used as a desk-scale
//! stand-in for labelled video datasets.

mod apa;
mod cycle;
mod oracle;
mod recall;
mod sweep;
pub mod synth;

use crate::featureio::{FeatureSequence, SequenceLabels};

pub use apa::{apa, apa_frames, apa_with, ApaMode};
pub use cycle::{
    cycle_consistency, cycle_from_path, evaluate_cycles, CandidateMode, CpeMode, CycleEntry,
    CycleOptions, CycleReport,
};
pub use oracle::oracle_candidates;
pub use recall::{recall_at, rerank_recall, RecallTable, DEFAULT_TOPK_RERANK};
pub use sweep::{
    evaluate_pair, evaluate_pairs, lowest_fraction_mean_apa, roc_auc, sweep_indicators,
    sweep_records, PairEvalConfig, PairRecord, SweepCurve, SweepPoint, SweepReport,
};
pub use synth::{generate_synthetic, SyntheticClip, SyntheticCorpus, SyntheticSpec};

/// A feature sequence with its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub seq: FeatureSequence,
    pub labels: SequenceLabels,
}

impl LabeledSequence {
    pub fn id(&self) -> &str {
        self.seq.id()
    }

    pub fn action(&self) -> Option<&str> {
        self.labels.action.as_deref()
    }
}
