use serde::{Deserialize, Serialize};

use crate::align::{warp_labels, AlignmentPath, Side};
use crate::error::{Error, Result};

/// How phase agreement is averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApaMode {
    /// Over every `(i, j)` tuple of the path.
    #[default]
    Tuples,
    /// Over the frames of the first sequence after warping the second onto it.
    Frames,
}

fn check_cover(a: &[u32], b: &[u32], p: &AlignmentPath) -> Result<()> {
    let Some(&(n, m)) = p.tuples().last() else {
        return Err(Error::Empty("alignment path"));
    };
    if a.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: a.len(),
        });
    }
    if b.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: b.len(),
        });
    }
    Ok(())
}

/// Fraction of path tuples `(i, j)` whose phase labels agree.
pub fn apa(a: &[u32], b: &[u32], p: &AlignmentPath) -> Result<f64> {
    check_cover(a, b, p)?;
    let agree = p
        .tuples()
        .iter()
        .filter(|&&(i, j)| a[i - 1] == b[j - 1])
        .count();
    Ok(agree as f64 / p.len() as f64)
}

/// Fraction of frames of `a` whose label matches the label warped from `b`.
pub fn apa_frames(a: &[u32], b: &[u32], p: &AlignmentPath) -> Result<f64> {
    check_cover(a, b, p)?;
    let warped = warp_labels(p, b, Side::First)?;
    let agree = a.iter().zip(&warped.values).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.len() as f64)
}

pub fn apa_with(mode: ApaMode, a: &[u32], b: &[u32], p: &AlignmentPath) -> Result<f64> {
    match mode {
        ApaMode::Tuples => apa(a, b, p),
        ApaMode::Frames => apa_frames(a, b, p),
    }
}
