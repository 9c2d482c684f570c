//! Seeded synthetic corpora of phase-labelled, time-warped trajectories.
//!
//! Every class is built from a prototype curve over normalized time
//! `u in [0, 1]`, split into phases. Each latent dimension is a smooth
//! global wave plus, inside every phase, a sum of 3 to 5 sinusoids that
//! vanish at the phase boundaries. A clip resamples its prototype under a
//! random strictly increasing piecewise-linear warp and adds Gaussian noise.
//!
//! With `mirrored_classes` set, every prototype also yields a second class
//! played backwards. Mirrored classes have the same temporal mean as their
//! source and can only be told apart by temporal order.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LabeledSequence;
use crate::error::{Error, Result};
use crate::featureio::{
    save_labels, write_json, DatasetManifest, FeatureSequence, ManifestEntry, SequenceLabels,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarpSpec {
    /// Interior breakpoints of the piecewise-linear warp.
    pub knots: usize,
    /// Segment slopes are drawn from `1 +- strength`; must be in `[0, 1)`.
    pub strength: f64,
}

impl Default for WarpSpec {
    fn default() -> Self {
        Self {
            knots: 3,
            strength: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub prototypes: usize,
    pub clips_per_prototype: usize,
    pub phases_per_prototype: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub warp: WarpSpec,
    pub noise_sigma: f64,
    pub dim: usize,
    pub seed: u64,
    pub mirrored_classes: bool,
    /// Probability that a phase reuses the shape of an earlier phase, so
    /// that visually similar states recur under different phase labels.
    pub revisit_prob: f64,
    /// Scale of the constant per-class offset added to every frame.
    pub offset_scale: f64,
    /// Scale of the slow global wave shared by all phases.
    pub base_scale: f64,
    /// Per-clip noise is `noise_sigma * U[1 - spread, 1 + spread]`.
    pub noise_spread: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            prototypes: 6,
            clips_per_prototype: 10,
            phases_per_prototype: 6,
            min_frames: 50,
            max_frames: 100,
            warp: WarpSpec::default(),
            noise_sigma: 1.0,
            dim: 4,
            seed: 0,
            mirrored_classes: false,
            revisit_prob: 0.75,
            offset_scale: 3.0,
            base_scale: 0.1,
            noise_spread: 0.6,
        }
    }
}

impl SyntheticSpec {
    /// Corpus for re-ranking checks: mirrored class pairs share their mean
    /// embeddings, so retrieval alone cannot separate them.
    pub fn recall_default() -> Self {
        Self {
            prototypes: 4,
            clips_per_prototype: 8,
            mirrored_classes: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        if self.prototypes == 0 || self.clips_per_prototype == 0 {
            return bad("needs at least one prototype and one clip per prototype");
        }
        if self.phases_per_prototype == 0 {
            return bad("needs at least one phase");
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad("frame range must satisfy 1 <= min_frames <= max_frames");
        }
        if self.dim == 0 {
            return bad("dimension must be at least 1");
        }
        if !(0.0..1.0).contains(&self.warp.strength) {
            return bad("warp strength must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.noise_spread) {
            return bad("noise spread must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.revisit_prob) {
            return bad("revisit probability must be in [0, 1]");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise sigma must be finite and non-negative");
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.prototypes * if self.mirrored_classes { 2 } else { 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Wave {
    amp: f64,
    freq: f64,
    offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bump {
    amp: f64,
    half_cycles: f64,
}

/// A phase-segmented latent curve over normalized time.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    /// Phase boundaries `0 = b_0 < b_1 < ... < b_P = 1`.
    boundaries: Vec<f64>,
    base: Vec<Wave>,
    offset: Vec<f64>,
    /// `bumps[phase][dim]`.
    bumps: Vec<Vec<Vec<Bump>>>,
}

impl Prototype {
    pub fn random<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Self {
        let (phases, dim) = (spec.phases_per_prototype, spec.dim);
        let std = Normal::new(0.0, 1.0).unwrap();
        let widths: Vec<f64> = (0..phases).map(|_| 0.5 + rng.random::<f64>()).collect();
        let total: f64 = widths.iter().sum();
        let mut boundaries = vec![0.0];
        let mut acc = 0.0;
        for w in &widths {
            acc += w / total;
            boundaries.push(acc);
        }
        *boundaries.last_mut().unwrap() = 1.0;

        let base = (0..dim)
            .map(|_| Wave {
                amp: spec.base_scale * std.sample(rng),
                freq: rng.random_range(0.5..2.5),
                offset: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        let mut bumps: Vec<Vec<Vec<Bump>>> = Vec::with_capacity(phases);
        for p in 0..phases {
            if p > 0 && rng.random_bool(spec.revisit_prob) {
                let earlier = rng.random_range(0..p);
                bumps.push(bumps[earlier].clone());
                continue;
            }
            bumps.push(
                (0..dim)
                    .map(|_| {
                        let terms = rng.random_range(3..=5);
                        (0..terms)
                            .map(|_| Bump {
                                amp: std.sample(rng) / (terms as f64).sqrt(),
                                half_cycles: rng.random_range(1..=4) as f64,
                            })
                            .collect()
                    })
                    .collect(),
            );
        }
        let offset = (0..dim)
            .map(|_| spec.offset_scale * std.sample(rng))
            .collect();
        Self {
            boundaries,
            base,
            offset,
            bumps,
        }
    }

    pub fn phases(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    /// 0-based phase containing `u`.
    pub fn phase_of(&self, u: f64) -> usize {
        let u = u.clamp(0.0, 1.0);
        (1..self.boundaries.len())
            .find(|&p| u < self.boundaries[p])
            .map(|p| p - 1)
            .unwrap_or(self.phases() - 1)
    }

    pub fn eval(&self, u: f64, out: &mut [f64]) {
        let u = u.clamp(0.0, 1.0);
        let p = self.phase_of(u);
        let (lo, hi) = (self.boundaries[p], self.boundaries[p + 1]);
        let s = (u - lo) / (hi - lo);
        for (k, o) in out.iter_mut().enumerate() {
            let w = self.base[k];
            let mut v =
                self.offset[k] + w.amp * (std::f64::consts::TAU * w.freq * u + w.offset).sin();
            for b in &self.bumps[p][k] {
                v += b.amp * (std::f64::consts::PI * b.half_cycles * s).sin();
            }
            *o = v;
        }
    }
}

/// Strictly increasing piecewise-linear map from clip time to prototype
/// time, both normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearWarp {
    /// Breakpoints `(s, u)` including `(0, 0)` and `(1, 1)`.
    pub knots: Vec<(f64, f64)>,
}

impl PiecewiseLinearWarp {
    pub fn identity() -> Self {
        Self {
            knots: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    pub fn random<R: Rng + ?Sized>(spec: &WarpSpec, rng: &mut R) -> Self {
        let segments = spec.knots + 1;
        let slopes: Vec<f64> = (0..segments)
            .map(|_| 1.0 + spec.strength * rng.random_range(-1.0..1.0))
            .collect();
        let total: f64 = slopes.iter().sum();
        let mut knots = vec![(0.0, 0.0)];
        let mut u = 0.0;
        for (k, slope) in slopes.iter().enumerate() {
            u += slope / total;
            let s = (k + 1) as f64 / segments as f64;
            knots.push((s, u));
        }
        *knots.last_mut().unwrap() = (1.0, 1.0);
        Self { knots }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        for w in self.knots.windows(2) {
            let ((s0, u0), (s1, u1)) = (w[0], w[1]);
            if s <= s1 {
                return u0 + (u1 - u0) * (s - s0) / (s1 - s0);
            }
        }
        1.0
    }
}

/// Ground truth stored next to each synthetic clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthWarp {
    pub id: String,
    pub class: usize,
    pub prototype: usize,
    pub mirrored: bool,
    pub warp: PiecewiseLinearWarp,
    /// Prototype time of every frame, after mirroring.
    pub proto_time: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub seq: FeatureSequence,
    pub labels: SequenceLabels,
    pub truth: GroundTruthWarp,
}

impl SyntheticClip {
    pub fn labeled(&self) -> LabeledSequence {
        LabeledSequence {
            seq: self.seq.clone(),
            labels: self.labels.clone(),
        }
    }
}

pub fn class_name(class: usize) -> String {
    format!("class{class:02}")
}

/// Renders one clip of `class` from `proto`. Phase ids are made unique
/// across classes as `class * phases + local_phase`.
#[allow(clippy::too_many_arguments)]
pub fn render_clip<R: Rng + ?Sized>(
    id: impl Into<String>,
    class: usize,
    prototype_index: usize,
    proto: &Prototype,
    mirrored: bool,
    len: usize,
    warp: PiecewiseLinearWarp,
    noise_sigma: f64,
    rng: &mut R,
) -> SyntheticClip {
    let id = id.into();
    let dim = proto.dim();
    let phases_n = proto.phases();
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).unwrap();
    let mut frames = Vec::with_capacity(len * dim);
    let mut phases = Vec::with_capacity(len);
    let mut proto_time = Vec::with_capacity(len);
    let mut buf = vec![0f64; dim];
    for j in 0..len {
        let s = if len > 1 {
            j as f64 / (len - 1) as f64
        } else {
            0.0
        };
        let warped = warp.eval(s);
        let u = if mirrored { 1.0 - warped } else { warped };
        proto.eval(u, &mut buf);
        for v in &buf {
            let n = if noise_sigma > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            frames.push((v + n) as f32);
        }
        let local = proto.phase_of(u);
        let local = if mirrored {
            phases_n - 1 - local
        } else {
            local
        };
        phases.push((class * phases_n + local) as u32);
        proto_time.push(u);
    }
    SyntheticClip {
        seq: FeatureSequence::new(id.clone(), len, dim, frames)
            .expect("rendered frames are finite"),
        labels: SequenceLabels {
            id: id.clone(),
            action: Some(class_name(class)),
            phases: Some(phases),
        },
        truth: GroundTruthWarp {
            id,
            class,
            prototype: prototype_index,
            mirrored,
            warp,
            proto_time,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub prototypes: Vec<Prototype>,
    pub clips: Vec<SyntheticClip>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prototypes: Vec<Prototype> = (0..spec.prototypes)
        .map(|_| Prototype::random(spec, &mut rng))
        .collect();
    let mut clips = Vec::with_capacity(spec.classes() * spec.clips_per_prototype);
    for class in 0..spec.classes() {
        let (p, mirrored) = (class % spec.prototypes, class >= spec.prototypes);
        for k in 0..spec.clips_per_prototype {
            let len = rng.random_range(spec.min_frames..=spec.max_frames);
            let warp = PiecewiseLinearWarp::random(&spec.warp, &mut rng);
            let sigma = spec.noise_sigma * (1.0 + spec.noise_spread * rng.random_range(-1.0..=1.0));
            clips.push(render_clip(
                format!("c{class:02}_{k:03}"),
                class,
                p,
                &prototypes[p],
                mirrored,
                len,
                warp,
                sigma,
                &mut rng,
            ));
        }
    }
    Ok(SyntheticCorpus {
        spec: spec.clone(),
        prototypes,
        clips,
    })
}

/// A reference to two corpus clips by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRef {
    pub a: String,
    pub b: String,
}

/// Pair list file consumed by the sweep protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsFile {
    /// Manifest path, relative to the pairs file.
    pub manifest: std::path::PathBuf,
    pub pairs: Vec<PairRef>,
}

impl SyntheticCorpus {
    pub fn labeled(&self) -> Vec<LabeledSequence> {
        self.clips.iter().map(SyntheticClip::labeled).collect()
    }

    pub fn find(&self, id: &str) -> Option<&SyntheticClip> {
        self.clips.iter().find(|c| c.seq.id() == id)
    }

    /// `per_kind` distinct same-class pairs followed by `per_kind` distinct
    /// cross-class pairs, as clip indices. Fewer are returned when the
    /// corpus cannot supply enough.
    pub fn balanced_pairs(&self, per_kind: usize, seed: u64) -> Vec<(usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.clips.len();
        let class = |k: usize| self.clips[k].truth.class;
        let mut same = Vec::new();
        let mut cross = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if class(a) == class(b) {
                    same.push((a, b));
                } else {
                    cross.push((a, b));
                }
            }
        }
        use rand::seq::IndexedRandom;
        let mut out: Vec<(usize, usize)> =
            same.choose_multiple(&mut rng, per_kind).copied().collect();
        out.extend(cross.choose_multiple(&mut rng, per_kind).copied());
        out
    }

    /// Writes features, label sidecars, ground-truth warps and
    /// `manifest.json` under `dir`, and a `pairs.json` with 50 + 50
    /// balanced pairs. Returns the manifest with paths as written
    /// (relative to `dir`).
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let dir = dir.as_ref();
        for sub in ["features", "labels", "warps"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let mut manifest = DatasetManifest::default();
        for clip in &self.clips {
            let id = clip.seq.id();
            let feature_path = Path::new("features").join(format!("{id}.avrf"));
            let label_path = Path::new("labels").join(format!("{id}.json"));
            crate::featureio::save_sequence(&clip.seq, dir.join(&feature_path))?;
            save_labels(&clip.labels, dir.join(&label_path))?;
            write_json(&clip.truth, &dir.join("warps").join(format!("{id}.json")))?;
            manifest.entries.push(ManifestEntry {
                id: id.to_owned(),
                feature_path,
                label_path: Some(label_path),
            });
        }
        crate::featureio::save_manifest(&manifest, dir.join("manifest.json"))?;
        let pairs = PairsFile {
            manifest: "manifest.json".into(),
            pairs: self
                .balanced_pairs(50, self.spec.seed)
                .into_iter()
                .map(|(a, b)| PairRef {
                    a: self.clips[a].seq.id().to_owned(),
                    b: self.clips[b].seq.id().to_owned(),
                })
                .collect(),
        };
        write_json(&pairs, &dir.join("pairs.json"))?;
        write_json(&self.spec, &dir.join("spec.json"))?;
        Ok(manifest)
    }
}
