//! Frame-level contextualization.
//!
//! Each frame is concatenated with the running sum of the frames up to it,
//! normalized by the full clip length, and the resulting rows are
//! zero-centered per clip. With 1-based frames `f_1..f_T`:
//!
//! ```text
//! g_j = f_j ++ (1/T) * sum_{t<=j} f_t
//! out_j = g_j - (1/T) * sum_l g_l
//! ```
//!
//! The running-sum half makes each frame aware of where it sits in the
//! clip, which a per-frame encoder cannot see on its own.

use crate::featureio::FeatureSequence;

/// Per-clip zero-centered frame features ready for alignment.
///
/// When built by [`contextualize`] the width is `2 * source_dim`; the raw
/// variant from [`contextualize_optional`] with `enabled = false` keeps the
/// original width and only centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualizedSequence {
    id: String,
    len: usize,
    width: usize,
    source_dim: usize,
    contextualized: bool,
    frames: Vec<f32>,
}

impl ContextualizedSequence {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    /// False for the centered-raw ablation features.
    pub fn is_contextualized(&self) -> bool {
        self.contextualized
    }

    pub fn values(&self) -> &[f32] {
        &self.frames
    }

    /// Row at 0-based index `j`.
    pub fn frame(&self, j: usize) -> &[f32] {
        &self.frames[j * self.width..(j + 1) * self.width]
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[f32]> + ExactSizeIterator + '_ {
        self.frames.chunks_exact(self.width)
    }

    /// Wraps already-prepared rows, e.g. features produced elsewhere.
    /// Rows are taken as-is; no centering is applied.
    pub fn from_prepared(
        id: impl Into<String>,
        len: usize,
        width: usize,
        frames: Vec<f32>,
    ) -> Self {
        assert!(len >= 1 && width >= 1, "empty feature matrix");
        assert_eq!(
            frames.len(),
            len * width,
            "frame buffer does not match len * width"
        );
        Self {
            id: id.into(),
            len,
            width,
            source_dim: width,
            contextualized: false,
            frames,
        }
    }
}

/// Centered-raw features share the same representation; only the width
/// and the `is_contextualized` flag differ.
pub type CenteredRawSequence = ContextualizedSequence;

pub fn contextualize(seq: &FeatureSequence) -> ContextualizedSequence {
    let t = seq.len();
    let d = seq.dim();
    let width = 2 * d;
    let inv_t = 1.0 / t as f64;

    let mut rows = vec![0f64; t * width];
    let mut running = vec![0f64; d];
    for (j, frame) in seq.rows().enumerate() {
        let out = &mut rows[j * width..(j + 1) * width];
        for (k, &v) in frame.iter().enumerate() {
            running[k] += v as f64;
            out[k] = v as f64;
            out[d + k] = running[k] * inv_t;
        }
    }
    ContextualizedSequence {
        id: seq.id().to_owned(),
        len: t,
        width,
        source_dim: d,
        contextualized: true,
        frames: center(rows, t, width),
    }
}

/// Contextualizes when `enabled`, otherwise only zero-centers the raw
/// features so ablations differ in the running-sum term alone.
pub fn contextualize_optional(seq: &FeatureSequence, enabled: bool) -> ContextualizedSequence {
    if enabled {
        return contextualize(seq);
    }
    let rows: Vec<f64> = seq.values().iter().map(|&v| v as f64).collect();
    ContextualizedSequence {
        id: seq.id().to_owned(),
        len: seq.len(),
        width: seq.dim(),
        source_dim: seq.dim(),
        contextualized: false,
        frames: center(rows, seq.len(), seq.dim()),
    }
}

fn center(mut rows: Vec<f64>, len: usize, width: usize) -> Vec<f32> {
    let mut mean = vec![0f64; width];
    for row in rows.chunks_exact(width) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= len as f64;
    }
    for row in rows.chunks_exact_mut(width) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    rows.into_iter().map(|v| v as f32).collect()
}
