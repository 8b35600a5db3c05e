//! Labelled and regression datasets plus synthetic generators.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{gaussian_vec, rng_from_seed};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("example {index}: x has length {got}, expected {expected}")]
    InputLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("example {index}: label {label} outside [0, {classes})")]
    LabelRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("example {index}: target has length {got}, expected {expected}")]
    TargetLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("example {index}: non-finite value")]
    NonFinite { index: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("malformed dataset file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

impl Example {
    pub fn labelled(x: Vec<f64>, label: usize) -> Self {
        Self {
            x,
            label: Some(label),
            target: None,
        }
    }

    pub fn regression(x: Vec<f64>, target: Vec<f64>) -> Self {
        Self {
            x,
            label: None,
            target: Some(target),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Self { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        !self.examples.is_empty() && self.examples.iter().all(|e| e.label.is_some())
    }

    pub fn has_targets(&self) -> bool {
        !self.examples.is_empty() && self.examples.iter().all(|e| e.target.is_some())
    }

    /// Checks every example against a model with `input_dim` inputs and `output_dim` outputs.
    pub fn validate(&self, input_dim: usize, output_dim: usize) -> Result<(), DataError> {
        for (index, e) in self.examples.iter().enumerate() {
            if e.x.len() != input_dim {
                return Err(DataError::InputLength {
                    index,
                    expected: input_dim,
                    got: e.x.len(),
                });
            }
            if e.x.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { index });
            }
            if let Some(label) = e.label {
                if label >= output_dim {
                    return Err(DataError::LabelRange {
                        index,
                        label,
                        classes: output_dim,
                    });
                }
            }
            if let Some(t) = &e.target {
                if t.len() != output_dim {
                    return Err(DataError::TargetLength {
                        index,
                        expected: output_dim,
                        got: t.len(),
                    });
                }
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(DataError::NonFinite { index });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json_string(self).expect("dataset serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), DataError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, DataError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `classes` Gaussian blobs in `dim` dimensions, `n` points assigned round-robin.
///
/// Centres sit on a circle of radius `separation` in the first two
/// coordinates (remaining coordinates zero), so blobs are well separated when
/// `spread` is small relative to `separation`.
pub fn blobs(
    n: usize,
    dim: usize,
    classes: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Dataset {
    assert!(dim >= 2 && classes >= 2);
    let mut rng = rng_from_seed(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
            let mut centre = vec![0.0; dim];
            centre[0] = separation * angle.cos();
            centre[1] = separation * angle.sin();
            centre
        })
        .collect();
    let examples = (0..n)
        .map(|i| {
            let label = i % classes;
            let noise = gaussian_vec(&mut rng, dim);
            let x = centres[label]
                .iter()
                .zip(noise)
                .map(|(c, z)| c + spread * z)
                .collect();
            Example::labelled(x, label)
        })
        .collect();
    Dataset::new(examples)
}

/// Smooth low-rank signals in `[0, 1]^dim` with `target = x` (autoencoder data).
///
/// Each signal is `0.5 + Σ_r c_r b_r` over `rank` sinusoidal basis vectors with
/// Gaussian coefficients, clamped to the unit interval.
pub fn patterns(n: usize, dim: usize, rank: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let basis: Vec<Vec<f64>> = (0..rank)
        .map(|r| {
            let freq = (r / 2 + 1) as f64;
            let phase = if r % 2 == 0 {
                0.0
            } else {
                std::f64::consts::FRAC_PI_2
            };
            (0..dim)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / dim as f64 + phase).sin())
                .collect()
        })
        .collect();
    let examples = (0..n)
        .map(|_| {
            let coeffs = gaussian_vec(&mut rng, rank);
            let x: Vec<f64> = (0..dim)
                .map(|i| {
                    let v = 0.5
                        + coeffs
                            .iter()
                            .zip(&basis)
                            .map(|(c, b)| 0.12 * c * b[i])
                            .sum::<f64>();
                    v.clamp(0.0, 1.0)
                })
                .collect();
            Example::regression(x.clone(), x)
        })
        .collect();
    Dataset::new(examples)
}
