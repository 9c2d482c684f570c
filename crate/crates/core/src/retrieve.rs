//! Clip-level retrieval: temporal mean embeddings, dataset standardization
//! and exact cosine top-k search.
//!
//! Index files (`.avri`) are little-endian:
//!
//! ```text
//! "AVRI" | version u32 | dimension u32 | count u32
//! mean: dimension x f64 | std: dimension x f64
//! count x { id_len u32 | id bytes (UTF-8) | dimension x f64 }
//! ```
//!
//! Stored vectors are already standardized.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureio::{DatasetManifest, FeatureSequence};

pub const AVRI_MAGIC: &[u8; 4] = b"AVRI";
pub const AVRI_VERSION: u32 = 1;
/// Floor applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Temporal mean of the raw frame features.
pub fn embed_clip(seq: &FeatureSequence) -> ClipEmbedding {
    let mut vector = vec![0f64; seq.dim()];
    for row in seq.rows() {
        for (acc, &v) in vector.iter_mut().zip(row) {
            *acc += v as f64;
        }
    }
    let t = seq.len() as f64;
    for v in &mut vector {
        *v /= t;
    }
    ClipEmbedding {
        id: seq.id().to_owned(),
        vector,
    }
}

/// Per-dimension population mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit(vectors: &[&[f64]]) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::Empty("retrieval dataset"));
        };
        let d = first.len();
        let n = vectors.len() as f64;
        let mut mean = vec![0f64; d];
        for v in vectors {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0f64; d];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v.iter()).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Dimensions whose spread is below [`STD_FLOOR`].
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.std.len())
            .filter(|&k| self.std[k] < STD_FLOOR)
            .collect()
    }

    pub fn standardize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s.max(STD_FLOOR))
            .collect()
    }

    pub fn unstandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| x * s.max(STD_FLOOR) + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub similarity: f64,
}

/// Immutable exact-search index over standardized clip embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    dimension: usize,
    stats: StandardizationStats,
    entries: Vec<ClipEmbedding>,
}

impl RetrievalIndex {
    /// Fits standardization on `embeddings` and stores them standardized.
    pub fn from_embeddings(embeddings: Vec<ClipEmbedding>) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::Empty("retrieval dataset"));
        }
        let mut seen = HashSet::new();
        for e in &embeddings {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        let raw: Vec<&[f64]> = embeddings.iter().map(|e| e.vector.as_slice()).collect();
        let stats = StandardizationStats::fit(&raw)?;
        let entries = embeddings
            .iter()
            .map(|e| ClipEmbedding {
                id: e.id.clone(),
                vector: stats.standardize(&e.vector),
            })
            .collect();
        Ok(Self {
            dimension: stats.dimension(),
            stats,
            entries,
        })
    }

    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a FeatureSequence>) -> Result<Self> {
        Self::from_embeddings(seqs.into_iter().map(embed_clip).collect())
    }

    /// Loads every clip listed in `manifest` and indexes it.
    pub fn build(manifest: &DatasetManifest) -> Result<Self> {
        if manifest.is_empty() {
            return Err(Error::Empty("manifest"));
        }
        let mut embeddings = Vec::with_capacity(manifest.len());
        for entry in &manifest.entries {
            embeddings.push(embed_clip(&manifest.load_sequence(entry)?));
        }
        Self::from_embeddings(embeddings)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> &StandardizationStats {
        &self.stats
    }

    /// Standardized embeddings in insertion order.
    pub fn entries(&self) -> &[ClipEmbedding] {
        &self.entries
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|e| e.id == id)
    }

    /// Top `k` clips by cosine similarity to the standardized mean
    /// embedding of `query`. Ties go to the smaller id.
    pub fn query_topk(&self, query: &FeatureSequence, k: usize) -> Result<Vec<SearchHit>> {
        let emb = embed_clip(query);
        if emb.vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: emb.vector.len(),
            });
        }
        self.search_standardized(&self.stats.standardize(&emb.vector), k)
    }

    /// Top `k` for a vector that is already in standardized space.
    pub fn search_standardized(&self, query: &[f64], k: usize) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if query.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: query.len(),
            });
        }
        let qn = norm(query);
        let mut hits: Vec<SearchHit> = self
            .entries
            .iter()
            .map(|e| SearchHit {
                id: e.id.clone(),
                similarity: cosine(query, qn, &e.vector),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.id.cmp(&b.id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(AVRI_MAGIC);
        out.extend_from_slice(&AVRI_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for v in self.stats.mean.iter().chain(&self.stats.std) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for e in &self.entries {
            out.extend_from_slice(&(e.id.len() as u32).to_le_bytes());
            out.extend_from_slice(e.id.as_bytes());
            for v in &e.vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != AVRI_MAGIC {
            return Err(Error::Corrupt {
                offset: 0,
                reason: "bad magic, expected \"AVRI\"".into(),
            });
        }
        let version = r.u32()?;
        if version != AVRI_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: AVRI_VERSION,
            });
        }
        let dimension = r.u32()? as usize;
        let count = r.u32()? as usize;
        if dimension == 0 {
            return Err(Error::Corrupt {
                offset: 8,
                reason: "zero dimension".into(),
            });
        }
        let mean = r.f64s(dimension)?;
        let std = r.f64s(dimension)?;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        let mut seen = HashSet::new();
        for _ in 0..count {
            let at = r.pos as u64;
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Corrupt {
                    offset: at + 4,
                    reason: "id is not valid UTF-8".into(),
                })?
                .to_owned();
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateId(id));
            }
            entries.push(ClipEmbedding {
                id,
                vector: r.f64s(dimension)?,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt {
                offset: r.pos as u64,
                reason: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Self {
            dimension,
            stats: StandardizationStats { mean, std },
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Corrupt {
                offset: self.bytes.len() as u64,
                reason: format!("truncated: needed {n} bytes at offset {}", self.pos),
            });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let at = self.pos as u64;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt {
            offset: at,
            reason: "length overflow".into(),
        })?)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                offset: at + 8 * k as u64,
            });
        }
        Ok(vals)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(q: &[f64], qn: f64, v: &[f64]) -> f64 {
    let vn = norm(v);
    if qn < STD_FLOOR || vn < STD_FLOOR {
        return 0.0;
    }
    q.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (qn * vn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn emb(id: &str, v: &[f64]) -> ClipEmbedding {
        ClipEmbedding {
            id: id.into(),
            vector: v.to_vec(),
        }
    }

    #[test]
    fn embedding_is_temporal_mean() {
        let s = FeatureSequence::from_rows("s", &[[1.0f32, 0.0], [3.0, 2.0]]).unwrap();
        assert_eq!(embed_clip(&s).vector, vec![2.0, 1.0]);
        let one = FeatureSequence::from_rows("o", &[[4.5f32, -1.0]]).unwrap();
        assert_eq!(embed_clip(&one).vector, vec![4.5, -1.0]);
        let flat = FeatureSequence::from_rows("f", &[[0.25f32], [0.25], [0.25]]).unwrap();
        assert_eq!(embed_clip(&flat).vector, vec![0.25]);
    }

    #[test]
    fn population_standardization() {
        let idx =
            RetrievalIndex::from_embeddings(vec![emb("a", &[0.0]), emb("b", &[2.0])]).unwrap();
        assert_eq!(idx.stats().mean, vec![1.0]);
        assert_eq!(idx.stats().std, vec![1.0]);
        assert_eq!(idx.entries()[0].vector, vec![-1.0]);
        assert_eq!(idx.entries()[1].vector, vec![1.0]);
    }

    #[test]
    fn single_clip_is_degenerate_but_finite() {
        let idx = RetrievalIndex::from_embeddings(vec![emb("a", &[3.0, -2.0])]).unwrap();
        assert_eq!(idx.stats().flagged(), vec![0, 1]);
        assert_eq!(idx.entries()[0].vector, vec![0.0, 0.0]);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            RetrievalIndex::from_embeddings(vec![emb("a", &[1.0]), emb("b", &[1.0, 2.0])]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            RetrievalIndex::from_embeddings(vec![]),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            RetrievalIndex::build(&DatasetManifest::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn standardized_search_order() {
        // Stats are fitted on these three points, then the stored vectors
        // are overwritten so search sees exactly (1,0), (0,1), (-1,0).
        let mut idx = RetrievalIndex::from_embeddings(vec![
            emb("first", &[1.0, 0.0]),
            emb("second", &[0.0, 1.0]),
            emb("third", &[-1.0, 0.0]),
        ])
        .unwrap();
        idx.entries[0].vector = vec![1.0, 0.0];
        idx.entries[1].vector = vec![0.0, 1.0];
        idx.entries[2].vector = vec![-1.0, 0.0];
        let hits = idx.search_standardized(&[1.0, 0.0], 10).unwrap();
        let got: Vec<(&str, f64)> = hits.iter().map(|h| (h.id.as_str(), h.similarity)).collect();
        assert_eq!(got, vec![("first", 1.0), ("second", 0.0), ("third", -1.0)]);
    }

    #[test]
    fn self_query_ranks_first() {
        let seqs: Vec<FeatureSequence> = (0..5)
            .map(|k| {
                let rows: Vec<[f32; 3]> = (0..4)
                    .map(|t| [k as f32, (t * k) as f32, (k * k) as f32 - t as f32])
                    .collect();
                FeatureSequence::from_rows(format!("c{k}"), &rows).unwrap()
            })
            .collect();
        let idx = RetrievalIndex::from_sequences(&seqs).unwrap();
        let hits = idx.query_topk(&seqs[3], 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].id, "c3");
        assert!((hits[0].similarity - 1.0).abs() < 1e-12);
        assert_eq!(idx.query_topk(&seqs[0], 50).unwrap().len(), 5);
        let wrong = FeatureSequence::from_rows("w", &[[1.0f32]]).unwrap();
        assert!(matches!(
            idx.query_topk(&wrong, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ties_broken_by_id() {
        let idx = RetrievalIndex::from_embeddings(vec![
            emb("b", &[1.0, 1.0]),
            emb("a", &[1.0, 1.0]),
            emb("c", &[-1.0, -1.0]),
        ])
        .unwrap();
        let hits = idx
            .search_standardized(&idx.entries()[0].vector.clone(), 3)
            .unwrap();
        assert_eq!(
            hits.iter().map(|h| h.id.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
    }

    #[test]
    fn persistence_errors() {
        let idx =
            RetrievalIndex::from_embeddings(vec![emb("a", &[0.0, 1.0]), emb("bb", &[2.0, 5.0])])
                .unwrap();
        let bytes = idx.to_bytes();
        assert_eq!(RetrievalIndex::from_bytes(&bytes).unwrap(), idx);
        assert!(matches!(
            RetrievalIndex::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Corrupt { .. })
        ));
        let mut v2 = bytes.clone();
        v2[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            RetrievalIndex::from_bytes(&v2),
            Err(Error::UnsupportedVersion {
                found: 2,
                expected: 1
            })
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(
            RetrievalIndex::from_bytes(&extra),
            Err(Error::Corrupt { .. })
        ));
    }

    proptest! {
        #[test]
        fn persistence_preserves_queries(
            vecs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 1..20),
            q in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let embs: Vec<_> = vecs.iter().enumerate().map(|(k, v)| emb(&format!("id{k:02}"), v)).collect();
            let idx = RetrievalIndex::from_embeddings(embs.clone()).unwrap();
            let back = RetrievalIndex::from_bytes(&idx.to_bytes()).unwrap();
            let z = idx.stats().standardize(&q);
            prop_assert_eq!(idx.search_standardized(&z, 5).unwrap(), back.search_standardized(&z, 5).unwrap());
            for (stored, raw) in idx.entries().iter().zip(&embs) {
                let un = idx.stats().unstandardize(&stored.vector);
                for (a, b) in un.iter().zip(&raw.vector) {
                    prop_assert!((a - b).abs() < 1e-5);
                }
            }
        }
    }
}
