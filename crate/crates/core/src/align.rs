//! Cost matrices, dynamic time warping and label warping along a path.

use serde::{Deserialize, Serialize};

use crate::context::ContextualizedSequence;
use crate::error::{Error, Result};

/// Norms below this make cosine undefined; such cells get distance 1.
pub const ZERO_NORM: f64 = 1e-12;

/// Dense `n x m` cost matrix, row-major.
///
/// Matrices from [`cost_matrix`] hold cosine distances in `[0, 2]`. The
/// alignment routines accept any finite non-negative costs, so scaled or
/// synthetic matrices can be built with [`CostMatrix::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("cost matrix"));
        }
        if values.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cost entries must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.as_ref().len(),
                });
            }
            values.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry at 0-based `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Entry at 1-based `(i, j)`, matching [`AlignmentPath`] tuples.
    #[inline]
    pub fn at1(&self, i: usize, j: usize) -> f64 {
        self.at(i - 1, j - 1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.at(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    /// Multiplies every entry by `alpha` (must be non-negative).
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * alpha).collect(),
        )
    }

    /// Sum of the entries visited by `path`.
    pub fn path_cost(&self, path: &AlignmentPath) -> f64 {
        path.tuples().iter().map(|&(i, j)| self.at1(i, j)).sum()
    }
}

/// Cosine distances `1 - cos(a_i, b_j)` between every pair of rows.
pub fn cost_matrix(a: &ContextualizedSequence, b: &ContextualizedSequence) -> Result<CostMatrix> {
    if a.width() != b.width() {
        return Err(Error::WidthMismatch {
            left: a.width(),
            right: b.width(),
        });
    }
    let widen = |s: &ContextualizedSequence| -> (Vec<Vec<f64>>, Vec<f64>) {
        let rows: Vec<Vec<f64>> = s
            .rows()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect();
        let norms = rows
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        (rows, norms)
    };
    let (ra, na) = widen(a);
    let (rb, nb) = widen(b);
    let mut values = Vec::with_capacity(ra.len() * rb.len());
    for (x, &nx) in ra.iter().zip(&na) {
        for (y, &ny) in rb.iter().zip(&nb) {
            values.push(cosine_distance(x, nx, y, ny));
        }
    }
    Ok(CostMatrix {
        rows: ra.len(),
        cols: rb.len(),
        values,
    })
}

fn cosine_distance(x: &[f64], nx: f64, y: &[f64], ny: f64) -> f64 {
    if nx < ZERO_NORM || ny < ZERO_NORM {
        return 1.0;
    }
    (1.0 - dot(x, y) / (nx * ny)).clamp(0.0, 2.0)
}

/// Four independent accumulators so the loop vectorizes.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0f64; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc
        .remainder()
        .iter()
        .zip(yc.remainder())
        .map(|(p, q)| p * q)
        .sum();
    for (p, q) in xc.zip(yc) {
        for k in 0..4 {
            acc[k] += p[k] * q[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// An ordered list of 1-based `(i, j)` index pairs.
///
/// Paths produced by [`dtw`] and the random sampler satisfy the full
/// warping-path contract checked by [`AlignmentPath::validate`]. Paths
/// returned by [`skip_still_frames`] keep the order but may advance the
/// warped side by more than one frame per step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlignmentPath(Vec<(usize, usize)>);

impl AlignmentPath {
    pub fn from_tuples(tuples: Vec<(usize, usize)>) -> Self {
        Self(tuples)
    }

    /// Builds a path and checks it against an `n x m` grid.
    pub fn new(tuples: Vec<(usize, usize)>, n: usize, m: usize) -> Result<Self> {
        let p = Self(tuples);
        p.validate(n, m)?;
        Ok(p)
    }

    /// The diagonal path of a square `n x n` grid.
    pub fn identity(n: usize) -> Self {
        Self((1..=n).map(|k| (k, k)).collect())
    }

    pub fn tuples(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<(usize, usize)> {
        self.0
    }

    /// Swaps the roles of the two sequences.
    pub fn transposed(&self) -> Self {
        Self(self.0.iter().map(|&(i, j)| (j, i)).collect())
    }

    /// Checks the endpoints `(1,1)` and `(n,m)`, the step set
    /// `{(0,1), (1,0), (1,1)}` and `max(n,m) <= L <= n+m`.
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("invalid path: {msg}")));
        let (Some(&first), Some(&last)) = (self.0.first(), self.0.last()) else {
            return bad("empty".into());
        };
        if first != (1, 1) {
            return bad(format!("starts at {first:?}"));
        }
        if last != (n, m) {
            return bad(format!("ends at {last:?}, expected {:?}", (n, m)));
        }
        for w in self.0.windows(2) {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !matches!((di, dj), (0, 1) | (1, 0) | (1, 1)) {
                return bad(format!("illegal step {:?} -> {:?}", w[0], w[1]));
            }
        }
        let len = self.0.len();
        if len < n.max(m) || len > n + m {
            return bad(format!("length {len} outside [{}, {}]", n.max(m), n + m));
        }
        Ok(())
    }
}

/// Which sequence of a pair keeps its own timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// The row sequence (`i` indices).
    First,
    /// The column sequence (`j` indices).
    Second,
}

impl Side {
    fn split(self, t: (usize, usize)) -> (usize, usize) {
        match self {
            Side::First => (t.0, t.1),
            Side::Second => (t.1, t.0),
        }
    }
}

/// Minimum-cost monotonic alignment and its total cost `D(n, m)`.
///
/// The cumulative table is filled with `D(i,j) = C(i,j) + min` over the
/// three predecessors. Backtracking breaks ties by preferring the diagonal,
/// then the step that advanced `i`, then the step that advanced `j`.
pub fn dtw(c: &CostMatrix) -> (AlignmentPath, f64) {
    let (n, m) = (c.rows(), c.cols());
    let mut acc = vec![0f64; n * m];
    for i in 0..n {
        for j in 0..m {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[j - 1],
                (_, 0) => acc[(i - 1) * m],
                _ => acc[(i - 1) * m + j - 1]
                    .min(acc[(i - 1) * m + j])
                    .min(acc[i * m + j - 1]),
            };
            acc[i * m + j] = c.at(i, j) + best;
        }
    }

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((n, m));
    while (i, j) != (0, 0) {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[(i - 1) * m + j - 1];
            let up = acc[(i - 1) * m + j];
            let left = acc[i * m + j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i + 1, j + 1));
    }
    path.reverse();
    (AlignmentPath(path), acc[n * m - 1])
}

/// Drops tuples whose `keep` side index was already seen, retaining the
/// first tuple for every index of the unwarped sequence.
pub fn skip_still_frames(p: &AlignmentPath, keep: Side) -> AlignmentPath {
    let mut last_kept = 0usize;
    let kept = p
        .tuples()
        .iter()
        .copied()
        .filter(|&t| {
            let (k, _) = keep.split(t);
            if k == last_kept {
                false
            } else {
                last_kept = k;
                true
            }
        })
        .collect();
    AlignmentPath(kept)
}

/// Labels of the packed sequence resampled onto the timeline of `keep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpedLabels<L> {
    pub reference_length: usize,
    pub values: Vec<L>,
}

/// Propagates `source_labels` (belonging to the side opposite `keep`)
/// along `p` so that every frame of the kept sequence receives the label of
/// the frame it is paired with.
pub fn warp_labels<L: Clone>(
    p: &AlignmentPath,
    source_labels: &[L],
    keep: Side,
) -> Result<WarpedLabels<L>> {
    let Some(&last) = p.tuples().last() else {
        return Err(Error::Empty("alignment path"));
    };
    let (kept_len, source_len) = keep.split(last);
    if source_labels.len() != source_len {
        return Err(Error::LengthMismatch {
            expected: source_len,
            found: source_labels.len(),
        });
    }
    let skipped = skip_still_frames(p, keep);
    let values = skipped
        .tuples()
        .iter()
        .map(|&t| source_labels[keep.split(t).1 - 1].clone())
        .collect::<Vec<_>>();
    debug_assert_eq!(values.len(), kept_len);
    Ok(WarpedLabels {
        reference_length: kept_len,
        values,
    })
}
