//! Context windows over CQT frames and input standardization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cqt::CqtMatrix;

/// Frames on each side of the center frame.
pub const CONTEXT_RADIUS: usize = 7;
pub const CONTEXT_FRAMES: usize = 2 * CONTEXT_RADIUS + 1;

const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("frame {frame} out of range for {n_frames} frames")]
    FrameOutOfRange { frame: usize, n_frames: usize },
    #[error("cannot fit a standardizer on zero vectors")]
    Empty,
    #[error("feature length {got} does not match {expected}")]
    Length { expected: usize, got: usize },
}

/// Concatenates frames `frame - 7 ..= frame + 7`, zero-filling past the edges.
pub fn context_window(matrix: &CqtMatrix, frame: usize) -> Result<Vec<f64>, FeatureError> {
    let n_frames = matrix.n_frames();
    if frame >= n_frames {
        return Err(FeatureError::FrameOutOfRange { frame, n_frames });
    }
    let bins = matrix.n_bins();
    let mut out = vec![0.0; CONTEXT_FRAMES * bins];
    for (slot, chunk) in out.chunks_exact_mut(bins).enumerate() {
        let source = (frame + slot).checked_sub(CONTEXT_RADIUS);
        if let Some(src) = source.filter(|&s| s < n_frames) {
            chunk.copy_from_slice(matrix.frame(src));
        }
    }
    Ok(out)
}

/// Per-dimension mean and deviation of `log(1 + x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizerStats {
    pub fn fit<V: AsRef<[f64]>>(features: &[V]) -> Result<Self, FeatureError> {
        let first = features.first().ok_or(FeatureError::Empty)?.as_ref();
        let dim = first.len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in features {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(FeatureError::Length { expected: dim, got: v.len() });
            }
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x.ln_1p();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for v in features {
            for ((s, x), m) in var.iter_mut().zip(v.as_ref()).zip(&mean) {
                let d = x.ln_1p() - m;
                *s += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < MIN_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(StandardizerStats { mean, std })
    }

    /// Identity transform apart from the `log(1 + x)` compression.
    pub fn identity(dim: usize) -> Self {
        StandardizerStats { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, features: &[f64]) -> Result<Vec<f64>, FeatureError> {
        let mut out = features.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, features: &mut [f64]) -> Result<(), FeatureError> {
        if features.len() != self.dim() {
            return Err(FeatureError::Length { expected: self.dim(), got: features.len() });
        }
        for ((x, m), s) in features.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (x.ln_1p() - m) / s;
        }
        Ok(())
    }
}
