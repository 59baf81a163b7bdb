//! Uniform box priors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("prior bounds have mismatched lengths ({lower} vs {upper})")]
    LengthMismatch { lower: usize, upper: usize },
    #[error("prior box is empty or non-finite in dimension {dim}: [{lo}, {hi}]")]
    EmptyBox { dim: usize, lo: f64, hi: f64 },
}

/// Uniform prior on an axis-aligned box. Density is 1/volume inside the box
/// and 0 outside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prior {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Prior {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, PriorError> {
        if lower.len() != upper.len() {
            return Err(PriorError::LengthMismatch { lower: lower.len(), upper: upper.len() });
        }
        for (j, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(PriorError::EmptyBox { dim: j, lo, hi });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `[-half, half]^d`.
    pub fn symmetric(dim: usize, half: f64) -> Self {
        Self::new(vec![-half; dim], vec![half; dim]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn log_volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l).ln()).sum()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            1.0 / self.volume()
        } else {
            0.0
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            -self.log_volume()
        } else {
            f64::NEG_INFINITY
        }
    }
}
