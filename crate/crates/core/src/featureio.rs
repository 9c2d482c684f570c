//! Feature sequences, label sidecars and dataset manifests.
//!
//! Feature files use the AVRF layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size   field
//! 0       4      magic "AVRF"
//! 4       4      version (u32, currently 1)
//! 8       4      frame count T (u32, >= 1)
//! 12      4      feature dimension d (u32, >= 1)
//! 16      4*T*d  IEEE-754 float32 values, row-major (frame after frame)
//! ```
//!
//! Labels live in a JSON sidecar (`{"id", "action", "phases"}`) and
//! manifests list `{"id", "feature_path", "label_path"}` entries. Relative
//! paths inside a manifest are resolved against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AVRF_MAGIC: &[u8; 4] = b"AVRF";
pub const AVRF_VERSION: u32 = 1;
pub const AVRF_HEADER_LEN: usize = 16;

/// A `T x d` matrix of per-frame features.
///
/// Storage is row-major and 0-based: [`FeatureSequence::frame`] takes a
/// 0-based index, so frame `j` of the 1-based math is `frame(j - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    id: String,
    len: usize,
    dim: usize,
    frames: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(id: impl Into<String>, len: usize, dim: usize, frames: Vec<f32>) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument(
                "frame count must be at least 1".into(),
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "feature dimension must be at least 1".into(),
            ));
        }
        let expected = len
            .checked_mul(dim)
            .ok_or_else(|| Error::InvalidArgument("T*d overflows".into()))?;
        if frames.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: frames.len(),
            });
        }
        if let Some(pos) = frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at frame {}, component {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            id: id.into(),
            len,
            dim,
            frames,
        })
    }

    /// Builds a sequence from equally sized rows.
    pub fn from_rows<R: AsRef<[f32]>>(id: impl Into<String>, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut frames = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            frames.extend_from_slice(row);
        }
        Self::new(id, rows.len(), dim, frames)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.frames
    }

    /// Frame at 0-based index `j`.
    pub fn frame(&self, j: usize) -> &[f32] {
        &self.frames[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[f32]> + ExactSizeIterator + '_ {
        self.frames.chunks_exact(self.dim)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// The same frames in reverse temporal order.
    pub fn reversed(&self) -> Self {
        let mut frames = Vec::with_capacity(self.frames.len());
        for row in self.frames.chunks_exact(self.dim).rev() {
            frames.extend_from_slice(row);
        }
        Self {
            id: self.id.clone(),
            len: self.len,
            dim: self.dim,
            frames,
        }
    }

    /// Encodes the sequence in the AVRF layout.
    pub fn to_avrf_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(AVRF_HEADER_LEN + 4 * self.frames.len());
        out.extend_from_slice(AVRF_MAGIC);
        out.extend_from_slice(&AVRF_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.frames {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes an AVRF buffer. The sequence id is supplied by the caller
    /// since the binary format does not carry one.
    pub fn from_avrf_bytes(id: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < AVRF_HEADER_LEN {
            return Err(Error::MalformedHeader {
                offset: bytes.len() as u64,
                reason: format!(
                    "header needs {AVRF_HEADER_LEN} bytes, file has {}",
                    bytes.len()
                ),
            });
        }
        if &bytes[0..4] != AVRF_MAGIC {
            return Err(Error::MalformedHeader {
                offset: 0,
                reason: "bad magic, expected \"AVRF\"".into(),
            });
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != AVRF_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: AVRF_VERSION,
            });
        }
        let len = word(8) as usize;
        if len == 0 {
            return Err(Error::MalformedHeader {
                offset: 8,
                reason: "frame count is zero".into(),
            });
        }
        let dim = word(12) as usize;
        if dim == 0 {
            return Err(Error::MalformedHeader {
                offset: 12,
                reason: "feature dimension is zero".into(),
            });
        }
        let payload = (len as u64) * (dim as u64) * 4;
        let found = (bytes.len() - AVRF_HEADER_LEN) as u64;
        if payload != found {
            return Err(Error::SizeMismatch {
                offset: bytes.len() as u64,
                expected: AVRF_HEADER_LEN as u64 + payload,
                found: bytes.len() as u64,
            });
        }
        let mut frames = Vec::with_capacity(len * dim);
        for (k, chunk) in bytes[AVRF_HEADER_LEN..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    offset: (AVRF_HEADER_LEN + 4 * k) as u64,
                });
            }
            frames.push(v);
        }
        Ok(Self {
            id: id.into(),
            len,
            dim,
            frames,
        })
    }
}

/// Loads an AVRF file. The sequence id defaults to the file stem.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_sequence_as(path, id)
}

pub fn load_sequence_as(path: impl AsRef<Path>, id: impl Into<String>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureSequence::from_avrf_bytes(id, &bytes)
}

pub fn save_sequence(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, seq.to_avrf_bytes()).map_err(|e| Error::io(path, e))
}

/// Per-frame annotations for one sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceLabels {
    pub id: String,
    pub action: Option<String>,
    pub phases: Option<Vec<u32>>,
}

impl SequenceLabels {
    /// Checks that the phase track, when present, covers every frame of `seq`.
    pub fn check_against(&self, seq: &FeatureSequence) -> Result<()> {
        match &self.phases {
            Some(p) if p.len() != seq.len() => Err(Error::LengthMismatch {
                expected: seq.len(),
                found: p.len(),
            }),
            _ => Ok(()),
        }
    }

    pub fn phases_or_err(&self) -> Result<&[u32]> {
        self.phases
            .as_deref()
            .ok_or_else(|| Error::MissingPhases(self.id.clone()))
    }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<SequenceLabels> {
    read_json(path.as_ref())
}

pub fn save_labels(labels: &SequenceLabels, path: impl AsRef<Path>) -> Result<()> {
    write_json(labels, path.as_ref())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub feature_path: PathBuf,
    pub label_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Rejects duplicate ids.
    pub fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(())
    }

    pub fn load_sequence(&self, entry: &ManifestEntry) -> Result<FeatureSequence> {
        load_sequence_as(&entry.feature_path, entry.id.clone())
    }

    /// Loads every sequence in manifest order.
    pub fn load_all(&self) -> Result<Vec<FeatureSequence>> {
        self.entries.iter().map(|e| self.load_sequence(e)).collect()
    }

    /// Loads the label sidecar of `entry`, if it has one.
    pub fn load_labels(&self, entry: &ManifestEntry) -> Result<Option<SequenceLabels>> {
        entry.label_path.as_ref().map(load_labels).transpose()
    }
}

/// Reads and validates a manifest. Relative paths are resolved against the
/// manifest's directory and every referenced file must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let mut manifest: DatasetManifest = read_json(path)?;
    manifest.check_unique()?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    for e in &mut manifest.entries {
        e.feature_path = base.join(&e.feature_path);
        if !e.feature_path.is_file() {
            return Err(Error::MissingFile(e.feature_path.clone()));
        }
        if let Some(lp) = e.label_path.as_mut() {
            *lp = base.join(&*lp);
            if !lp.is_file() {
                return Err(Error::MissingFile(lp.clone()));
            }
        }
    }
    Ok(manifest)
}

/// Writes the manifest exactly as given; no path rewriting happens.
pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    manifest.check_unique()?;
    write_json(manifest, path.as_ref())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(t: u32, d: u32) -> Vec<u8> {
        let mut b = b"AVRF".to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&t.to_le_bytes());
        b.extend_from_slice(&d.to_le_bytes());
        b
    }

    #[test]
    fn decodes_three_by_two() {
        let mut bytes = header(3, 2);
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let seq = FeatureSequence::from_avrf_bytes("x", &bytes).unwrap();
        assert_eq!((seq.len(), seq.dim()), (3, 2));
        assert_eq!(seq.frame(2), &[5.0, 6.0]);
    }

    #[test]
    fn short_payload_is_a_size_mismatch() {
        let mut bytes = header(3, 2);
        for v in [1.0f32; 5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let err = FeatureSequence::from_avrf_bytes("x", &bytes).unwrap_err();
        assert!(
            matches!(err, Error::SizeMismatch { offset: 36, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("size mismatch"));
    }

    #[test]
    fn nan_is_rejected_with_offset() {
        let mut bytes = header(1, 3);
        for v in [0.0f32, f32::NAN, 1.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let err = FeatureSequence::from_avrf_bytes("x", &bytes).unwrap_err();
        assert!(matches!(err, Error::NonFinite { offset: 20 }));
        assert!(err.to_string().contains("non-finite value"));
    }

    #[test]
    fn bad_headers() {
        assert!(matches!(
            FeatureSequence::from_avrf_bytes("x", b"AVR").unwrap_err(),
            Error::MalformedHeader { offset: 3, .. }
        ));
        let mut bad_magic = header(1, 1);
        bad_magic[0] = b'X';
        bad_magic.extend_from_slice(&0f32.to_le_bytes());
        assert!(matches!(
            FeatureSequence::from_avrf_bytes("x", &bad_magic).unwrap_err(),
            Error::MalformedHeader { offset: 0, .. }
        ));
        assert!(matches!(
            FeatureSequence::from_avrf_bytes("x", &header(0, 4)).unwrap_err(),
            Error::MalformedHeader { offset: 8, .. }
        ));
        let mut v2 = header(1, 1);
        v2[4] = 2;
        v2.extend_from_slice(&0f32.to_le_bytes());
        assert!(matches!(
            FeatureSequence::from_avrf_bytes("x", &v2).unwrap_err(),
            Error::UnsupportedVersion { found: 2, .. }
        ));
    }

    #[test]
    fn minimal_file_is_twenty_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.avrf");
        let seq = FeatureSequence::new("one", 1, 1, vec![0.0]).unwrap();
        save_sequence(&seq, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 20);
        assert_eq!(load_sequence(&path).unwrap(), seq);
    }

    #[test]
    fn truncated_file_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.avrf");
        let seq = FeatureSequence::from_rows("s", &[[1.0f32, 2.0], [3.0, 4.0]]).unwrap();
        save_sequence(&seq, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            load_sequence(&path).unwrap_err(),
            Error::SizeMismatch { .. }
        ));
    }

    #[test]
    fn manifest_validation() {
        let dir = tempfile::tempdir().unwrap();
        let seq = FeatureSequence::new("a", 1, 1, vec![1.0]).unwrap();
        save_sequence(&seq, dir.path().join("a.avrf")).unwrap();
        save_sequence(&seq, dir.path().join("b.avrf")).unwrap();

        let good = r#"{"entries": [
            {"id": "a", "feature_path": "a.avrf", "label_path": null},
            {"id": "b", "feature_path": "b.avrf", "label_path": null}]}"#;
        let path = dir.path().join("m.json");
        fs::write(&path, good).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.load_all().unwrap()[1].id(), "b");

        let dup = r#"{"entries": [
            {"id": "a", "feature_path": "a.avrf", "label_path": null},
            {"id": "a", "feature_path": "b.avrf", "label_path": null}]}"#;
        fs::write(&path, dup).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate id"));

        let missing = r#"{"entries": [{"id": "c", "feature_path": "c.avrf", "label_path": null}]}"#;
        fs::write(&path, missing).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("c.avrf"), "{err}");

        fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            load_manifest(&path).unwrap_err(),
            Error::Json { .. }
        ));
    }

    #[test]
    fn labels_round_trip_and_length_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.json");
        let labels = SequenceLabels {
            id: "a".into(),
            action: None,
            phases: Some(vec![0, 0, 1]),
        };
        save_labels(&labels, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"action\": null"));
        assert_eq!(load_labels(&path).unwrap(), labels);
        let seq = FeatureSequence::new("a", 2, 1, vec![0.0, 1.0]).unwrap();
        assert!(labels.check_against(&seq).is_err());
    }

    proptest! {
        #[test]
        fn avrf_round_trip_is_bit_exact(
            (t, d, values) in (1usize..=64, 1usize..=32).prop_flat_map(|(t, d)| {
                (Just(t), Just(d), proptest::collection::vec(
                    proptest::num::f32::NORMAL | proptest::num::f32::SUBNORMAL | proptest::num::f32::ZERO,
                    t * d,
                ))
            })
        ) {
            let seq = FeatureSequence::new("p", t, d, values).unwrap();
            let back = FeatureSequence::from_avrf_bytes("p", &seq.to_avrf_bytes()).unwrap();
            prop_assert_eq!(back.len(), t);
            prop_assert_eq!(back.dim(), d);
            let same = seq.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
