//! Alignable sequence retrieval.
//!
//! Given collections of per-frame feature sequences this crate retrieves
//! candidate matches for a query by clip-level cosine similarity, re-ranks
//! them by how well they temporally align (DRAQ), computes the optimal
//! monotonic alignment with dynamic time warping, and evaluates the whole
//! pipeline with phase-agreement and cycle-consistency metrics.
//!
//! Frame indices are 1-based wherever they appear in an [`AlignmentPath`] or
//! in label math, and 0-based for slice access into storage. Accessors that
//! take a frame index say which convention they use.

pub mod align;
pub mod context;
pub mod draq;
mod error;
pub mod evalbench;
pub mod featureio;
pub mod pipeline;
pub mod retrieve;

pub use align::{
    cost_matrix, dtw, skip_still_frames, warp_labels, AlignmentPath, CostMatrix, Side,
};
pub use context::{contextualize, contextualize_optional, ContextualizedSequence};
pub use draq::{
    draq, dtw_cost_indicator, kendall_tau_indicator, random_path_cost, sample_random_path,
    AlignabilityScore, Indicator, RandomPathConfig, SamplerMode,
};
pub use error::{Error, Result};
pub use featureio::{
    load_labels, load_manifest, load_sequence, save_labels, save_manifest, save_sequence,
    DatasetManifest, FeatureSequence, ManifestEntry, SequenceLabels,
};
pub use pipeline::{avr_query, AvrConfig, AvrResult, Rerank, SequenceSource};
pub use retrieve::{embed_clip, ClipEmbedding, RetrievalIndex, SearchHit, StandardizationStats};
