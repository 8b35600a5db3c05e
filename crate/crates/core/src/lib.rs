//! Adversarial perturbations for differentiable classifiers and regressors.
//!
//! Attacks are derived from first-order (and, for regression, second-order)
//! expansions of a loss around the clean input, which turns the search for a
//! perturbation into a small convex program with a closed-form solution:
//!
//! - [`classify`]: margin-loss attacks under an ℓp budget, the minimal-norm
//!   attack, iterative and dithered drivers (FGSM, BIM, PGD, targeted and
//!   DeepFool-style configurations) and random baselines.
//! - [`regress`]: quadratic attacks through operator norms of the Jacobian,
//!   single- and multi-subset attacks over a [`regress::Partition`] and the
//!   iterative linearized attack.
//! - [`metrics`]: fooling ratio, the two robustness measures and PSNR.
//!
//! Models are plain feedforward networks ([`model::Model`]) whose Jacobian is
//! accessed matrix-free through JVPs and VJPs.

pub mod classify;
pub mod data;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod model;
pub mod norms;
pub mod regress;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod train;

pub use classify::{AttackConfig, ClassifyAttack, DitherSchedule, LossKind, MarginContext};
pub use data::{Dataset, Example};
pub use model::{Activation, Model};
pub use norms::Exponent;
pub use regress::{Partition, RegressionContext};
pub use report::{AttackReport, Norms};
pub use tensor::Tensor;
