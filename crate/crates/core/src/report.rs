//! Per-example attack outcome.

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::model::ModelError;
use crate::norms::{lp_norm, Exponent, NormError};

/// Errors shared by the classification and regression attack families.
#[derive(Debug, Error)]
pub enum AttackError {
    #[error("model has {0} output(s); margin losses need at least two classes")]
    NoCompetitor(usize),
    #[error("class {class} is outside [0, {classes})")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("target class {0} equals the source class")]
    TargetIsSource(usize),
    #[error("loss gradient vanished at iteration {iteration}; dither the linearization point")]
    ZeroGradient { iteration: usize },
    #[error("loss at the clean input is {0}; the minimal-norm attack needs a positive loss")]
    NonPositiveLoss(f64),
    #[error("exponent p = {0} is not supported here")]
    UnsupportedExponent(Exponent),
    #[error("invalid attack configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}; use the subset or linear attacks, which stay matrix-free")]
    JacobianTooLarge(ModelError),
    #[error("Jacobian is numerically zero at this input")]
    DegenerateJacobian,
    #[error("{subsets} subsets requested but the partition only has {available}")]
    TooManySubsets { subsets: usize, available: usize },
    #[error("exhaustive search over {0} signs exceeds the limit of {1}")]
    TooManySigns(usize, usize),
    #[error(transparent)]
    Partition(#[from] crate::regress::PartitionError),
    #[error(transparent)]
    Norm(NormError),
    #[error(transparent)]
    Model(ModelError),
}

impl From<ModelError> for AttackError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SizeGuard { .. } => AttackError::JacobianTooLarge(e),
            other => AttackError::Model(other),
        }
    }
}

impl From<NormError> for AttackError {
    fn from(e: NormError) -> Self {
        match e {
            NormError::ZeroGradient => AttackError::ZeroGradient { iteration: 0 },
            NormError::DegenerateJacobian { .. } => AttackError::DegenerateJacobian,
            NormError::Model(m) => m.into(),
            other => AttackError::Norm(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl Norms {
    pub fn of(v: &[f64]) -> Self {
        Self {
            l1: lp_norm(v, Exponent::ONE),
            l2: lp_norm(v, Exponent::TWO),
            linf: lp_norm(v, Exponent::INF),
        }
    }
}

/// Perturbation produced by an attack together with what it achieved.
///
/// For classification `success` means the predicted class moved away from the
/// reference class (or onto the target in targeted mode). For regression it
/// means the loss `‖f(x + η) − y‖²` increased.
#[derive(Debug, Clone, Serialize)]
pub struct AttackReport {
    pub eta: Vec<f64>,
    pub success: bool,
    pub norms: Norms,
    pub loss_before: f64,
    pub loss_after: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_class_after: Option<usize>,
    pub iterations_used: usize,
    /// Loss at `η = 0` followed by the loss after every iteration.
    pub loss_trajectory: Vec<f64>,
    /// Partition subsets carrying the perturbation (subset attacks only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub subsets: Vec<usize>,
    /// Value of the relaxed objective the closed form optimizes, when defined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Wall time; excluded from serialized records so reruns are byte-identical.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl AttackReport {
    pub fn norm(&self, p: Exponent) -> f64 {
        lp_norm(&self.eta, p)
    }
}
