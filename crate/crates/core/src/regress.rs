//! Attacks on regression models.
//!
//! The loss is `L(x, η) = ‖f(x + η) − y‖²`, maximized. When the ground truth
//! `y` is unknown it is replaced by `f(x)`, which turns the problem into
//! maximizing `‖J η‖²` to second order. That quadratic problem is solved in
//! closed form for ℓ2 (top singular vector) and ℓ1 (largest column), and
//! approximately for ℓ∞ and subset constraints with a greedy sign recursion.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{dithered_gradient, AttackConfig, MAX_DITHER_RETRIES};
use crate::model::{max_jacobian_elems, Linearization, Model, ModelError};
use crate::norms::{
    dual_maximizer, greedy_sign_vector, lp_norm, project_to_ball, second_singular_estimate,
    signed_sum_sq, spectral_norm_power_at, Exponent, PowerOptions, BUDGET_RTOL,
};
use crate::report::{AttackError, AttackReport, Norms};
use crate::rng::rng_from_seed;
use crate::tensor::{add, norm2, sign, unit};

type Result<T> = std::result::Result<T, AttackError>;

/// Largest `Z` accepted by [`exhaustive_sign_oracle`].
pub const MAX_EXHAUSTIVE_SIGNS: usize = 20;
/// Relative gap below which the top singular value is reported as repeated.
pub const MULTIPLICITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("partition has no subsets")]
    Empty,
    #[error("index {index} is outside [0, {dim})")]
    OutOfRange { index: usize, dim: usize },
    #[error("index {0} appears in more than one subset")]
    Overlap(usize),
    #[error("index {0} is not covered by any subset")]
    Uncovered(usize),
    #[error("subset {subset} has {got} indices, expected Z = {z}")]
    Cardinality { subset: usize, got: usize, z: usize },
    #[error("cannot split {dim} indices into subsets of size {z}")]
    Indivisible { dim: usize, z: usize },
    #[error("malformed partition file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Disjoint, equally sized subsets covering the input indices `[M]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    #[serde(rename = "Z")]
    z: usize,
    subsets: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(subsets: Vec<Vec<usize>>, dim: usize) -> std::result::Result<Self, PartitionError> {
        let z = subsets.first().map(Vec::len).ok_or(PartitionError::Empty)?;
        let p = Self { z, subsets };
        p.validate(dim)?;
        Ok(p)
    }

    /// `[0..z), [z..2z), …`.
    pub fn contiguous(dim: usize, z: usize) -> std::result::Result<Self, PartitionError> {
        if z == 0 || !dim.is_multiple_of(z) {
            return Err(PartitionError::Indivisible { dim, z });
        }
        Self::new(
            (0..dim / z)
                .map(|s| (s * z..(s + 1) * z).collect())
                .collect(),
            dim,
        )
    }

    /// Every index on its own (`Z = 1`).
    pub fn singletons(dim: usize) -> Self {
        Self::contiguous(dim, 1).expect("z = 1 divides any dimension")
    }

    /// One subset holding everything (`S = 1`).
    pub fn whole(dim: usize) -> Self {
        Self::contiguous(dim, dim).expect("dim divides itself")
    }

    pub fn validate(&self, dim: usize) -> std::result::Result<(), PartitionError> {
        if self.subsets.is_empty() || self.z == 0 {
            return Err(PartitionError::Empty);
        }
        let mut seen = vec![false; dim];
        for (s, subset) in self.subsets.iter().enumerate() {
            if subset.len() != self.z {
                return Err(PartitionError::Cardinality {
                    subset: s,
                    got: subset.len(),
                    z: self.z,
                });
            }
            for &i in subset {
                if i >= dim {
                    return Err(PartitionError::OutOfRange { index: i, dim });
                }
                if seen[i] {
                    return Err(PartitionError::Overlap(i));
                }
                seen[i] = true;
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(PartitionError::Uncovered(i)),
            None => Ok(()),
        }
    }

    pub fn z(&self) -> usize {
        self.z
    }

    /// Number of subsets `S`.
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z * self.subsets.len()
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn subset(&self, s: usize) -> &[usize] {
        &self.subsets[s]
    }

    /// Mixed zero-norm: how many subsets carry a nonzero entry of `v`.
    pub fn mixed_zero_norm(&self, v: &[f64]) -> usize {
        self.subsets
            .iter()
            .filter(|s| s.iter().any(|&i| v[i] != 0.0))
            .count()
    }

    /// Indices of the subsets carrying a nonzero entry of `v`.
    pub fn touched(&self, v: &[f64]) -> Vec<usize> {
        (0..self.subsets.len())
            .filter(|&s| self.subsets[s].iter().any(|&i| v[i] != 0.0))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("partition serialization cannot fail")
    }

    /// Parses and validates against an input dimension.
    pub fn from_json(s: &str, dim: usize) -> std::result::Result<Self, PartitionError> {
        let p: Self = serde_json::from_str(s)?;
        p.validate(dim)?;
        Ok(p)
    }

    pub fn load<P: AsRef<Path>>(path: P, dim: usize) -> std::result::Result<Self, PartitionError> {
        Self::from_json(&std::fs::read_to_string(path)?, dim)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> std::result::Result<(), PartitionError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// A regression model, a clean input and the reference output `y`.
#[derive(Debug, Clone)]
pub struct RegressionContext<'m> {
    model: &'m Model,
    x: Vec<f64>,
    y: Vec<f64>,
    use_y_approx: bool,
    max_jacobian: usize,
}

impl<'m> RegressionContext<'m> {
    /// `y` given means a known ground truth; `None` requires `use_y_approx` and sets `y = f(x)`.
    pub fn new(model: &'m Model, x: &[f64], y: Option<&[f64]>, use_y_approx: bool) -> Result<Self> {
        let fx = model.forward(x)?;
        let y = match y {
            Some(y) if y.len() != fx.len() => {
                return Err(AttackError::InvalidConfig(format!(
                    "target has length {}, model outputs {}",
                    y.len(),
                    fx.len()
                )))
            }
            Some(y) => y.to_vec(),
            None if use_y_approx => fx,
            None => {
                return Err(AttackError::InvalidConfig(
                    "no target given; enable the y ≈ f(x) approximation".into(),
                ))
            }
        };
        Ok(Self {
            model,
            x: x.to_vec(),
            y,
            use_y_approx,
            max_jacobian: max_jacobian_elems(),
        })
    }

    pub fn with_target(model: &'m Model, x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(model, x, Some(y), false)
    }

    /// Reference `y = f(x)`.
    pub fn self_referenced(model: &'m Model, x: &[f64]) -> Result<Self> {
        Self::new(model, x, None, true)
    }

    pub fn with_max_jacobian(mut self, elems: usize) -> Self {
        self.max_jacobian = elems;
        self
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn uses_y_approx(&self) -> bool {
        self.use_y_approx
    }

    /// `‖f(x + η) − y‖²`.
    pub fn loss_at(&self, eta: &[f64]) -> Result<f64> {
        let f = self.model.forward(&add(&self.x, eta))?;
        Ok(f.iter().zip(&self.y).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    /// `∇_η L = 2 Jᵀ (f(x + η) − y)`.
    pub fn grad_at(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let lin = self.model.linearize(&add(&self.x, eta))?;
        let r: Vec<f64> = lin
            .output()
            .iter()
            .zip(&self.y)
            .map(|(a, b)| 2.0 * (a - b))
            .collect();
        Ok(lin.vjp(&r)?)
    }

    fn linearize(&self) -> Result<Linearization<'m>> {
        Ok(self.model.linearize(&self.x)?)
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &self,
        eta: Vec<f64>,
        trajectory: Vec<f64>,
        iterations: usize,
        subsets: Vec<usize>,
        objective: Option<f64>,
        note: Option<String>,
        start: Instant,
    ) -> AttackReport {
        let loss_before = trajectory[0];
        let loss_after = *trajectory.last().expect("non-empty");
        AttackReport {
            norms: Norms::of(&eta),
            eta,
            success: loss_after > loss_before,
            loss_before,
            loss_after,
            predicted_class_after: None,
            iterations_used: iterations,
            loss_trajectory: trajectory,
            subsets,
            objective,
            note,
            elapsed: start.elapsed(),
        }
    }

    /// Picks between `η` and `−η` by the true loss (`+` on ties).
    fn signed(&self, eta: Vec<f64>) -> Result<(Vec<f64>, f64, f64)> {
        let neg: Vec<f64> = eta.iter().map(|v| -v).collect();
        let (lp, ln) = (self.loss_at(&eta)?, self.loss_at(&neg)?);
        let before = self.loss_at(&vec![0.0; self.x.len()])?;
        Ok(if ln > lp {
            (neg, ln, before)
        } else {
            (eta, lp, before)
        })
    }
}

/// Columns `J e_i` for the given input indices, one jvp each.
fn jacobian_columns(lin: &Linearization<'_>, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
    let m = lin.input().len();
    indices.iter().map(|&i| Ok(lin.jvp(&unit(m, i))?)).collect()
}

/// `η = ±ε v_max` with `v_max` the top right singular vector of `J_f(x)`.
pub fn quadratic_l2(ctx: &RegressionContext<'_>, eps: f64) -> Result<AttackReport> {
    quadratic_l2_with(ctx, eps, PowerOptions::default())
}

pub fn quadratic_l2_with(
    ctx: &RegressionContext<'_>,
    eps: f64,
    opts: PowerOptions,
) -> Result<AttackReport> {
    let start = Instant::now();
    let lin = ctx.linearize()?;
    let top = spectral_norm_power_at(&lin, opts)?;
    let second = second_singular_estimate(&lin, &top, opts)?;
    let note = (second >= top.sigma * (1.0 - MULTIPLICITY_TOL)).then(|| {
        format!(
            "top singular value {} is repeated; v_max is not unique",
            top.sigma
        )
    });
    let eta = top.v_max.iter().map(|v| eps * v).collect();
    let (eta, after, before) = ctx.signed(eta)?;
    let objective = eps * eps * top.sigma * top.sigma;
    Ok(ctx.report(
        eta,
        vec![before, after],
        top.iterations,
        Vec::new(),
        Some(objective),
        note,
        start,
    ))
}

/// `η = ±ε e_{k*}` on the Jacobian column of largest ℓ2 norm (lowest index on ties).
pub fn quadratic_l1(ctx: &RegressionContext<'_>, eps: f64) -> Result<AttackReport> {
    let start = Instant::now();
    let lin = ctx.linearize()?;
    let m = ctx.x.len();
    let norms: Vec<f64> = jacobian_columns(&lin, &(0..m).collect::<Vec<_>>())?
        .iter()
        .map(|c| norm2(c))
        .collect();
    let k = crate::tensor::argmax(&norms);
    let mut eta = vec![0.0; m];
    eta[k] = eps;
    let (eta, after, before) = ctx.signed(eta)?;
    let objective = eps * eps * norms[k] * norms[k];
    Ok(ctx.report(
        eta,
        vec![before, after],
        1,
        Vec::new(),
        Some(objective),
        None,
        start,
    ))
}

/// Best single-subset greedy sign pattern: `(subset, ρ, ‖Σ ρ_z J_z‖²)`.
fn best_subset(lin: &Linearization<'_>, partition: &Partition) -> Result<(usize, Vec<f64>, f64)> {
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for (s, subset) in partition.subsets().iter().enumerate() {
        let cols = jacobian_columns(lin, subset)?;
        let rho = greedy_sign_vector(&cols)?;
        let value = signed_sum_sq(&cols, &rho);
        if best.as_ref().is_none_or(|(_, _, v)| value > *v) {
            best = Some((s, rho, value));
        }
    }
    Ok(best.expect("partition is non-empty"))
}

/// Greedy `±ε` sign pattern on one subset, the subset chosen by the largest greedy value.
pub fn subset_attack_quadratic(
    ctx: &RegressionContext<'_>,
    partition: &Partition,
    eps: f64,
) -> Result<AttackReport> {
    let start = Instant::now();
    partition.validate(ctx.x.len())?;
    let lin = ctx.linearize()?;
    let (s, rho, value) = best_subset(&lin, partition)?;
    let mut eta = vec![0.0; ctx.x.len()];
    for (&i, r) in partition.subset(s).iter().zip(&rho) {
        eta[i] = eps * r;
    }
    let (eta, after, before) = ctx.signed(eta)?;
    Ok(ctx.report(
        eta,
        vec![before, after],
        1,
        vec![s],
        Some(eps * eps * value),
        None,
        start,
    ))
}

/// Greedy `±ε` sign pattern over all inputs. Refuses when `M·K` exceeds the Jacobian guard.
pub fn quadratic_linf_greedy(ctx: &RegressionContext<'_>, eps: f64) -> Result<AttackReport> {
    let m = ctx.x.len();
    let elems = m * ctx.model.output_dim();
    if elems > ctx.max_jacobian {
        return Err(AttackError::JacobianTooLarge(ModelError::SizeGuard {
            elems,
            max: ctx.max_jacobian,
        }));
    }
    let mut report = subset_attack_quadratic(ctx, &Partition::whole(m), eps)?;
    report.subsets.clear();
    Ok(report)
}

/// Exact maximizer of `‖Σ_z ρ_z J_z‖²` over `ρ ∈ {±1}^Z`; returns `(ρ, ε²·value)`.
///
/// `ρ_0 = +1` is fixed since `ρ` and `−ρ` give the same value; the first
/// pattern reaching the maximum wins.
pub fn exhaustive_sign_oracle(columns: &[Vec<f64>], eps: f64) -> Result<(Vec<f64>, f64)> {
    let z = columns.len();
    if z == 0 {
        return Err(AttackError::InvalidConfig("no columns".into()));
    }
    if z > MAX_EXHAUSTIVE_SIGNS {
        return Err(AttackError::TooManySigns(z, MAX_EXHAUSTIVE_SIGNS));
    }
    let mut rho = vec![1.0; z];
    let mut best = (rho.clone(), f64::NEG_INFINITY);
    for mask in 0u32..(1u32 << (z - 1)) {
        for (j, r) in rho.iter_mut().enumerate().skip(1) {
            *r = if mask >> (j - 1) & 1 == 1 { -1.0 } else { 1.0 };
        }
        let value = signed_sum_sq(columns, &rho);
        if value > best.1 {
            best = (rho.clone(), value);
        }
    }
    Ok((best.0, eps * eps * best.1))
}

/// Subset of largest gradient ℓ1 mass among those not yet used; lowest index on ties.
fn best_linear_subset(g: &[f64], partition: &Partition, used: &[bool]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (s, subset) in partition.subsets().iter().enumerate() {
        if used[s] {
            continue;
        }
        let mass: f64 = subset.iter().map(|&i| g[i].abs()).sum();
        if best.is_none_or(|(_, m)| mass > m) {
            best = Some((s, mass));
        }
    }
    best.expect("an unused subset remains").0
}

/// `η = ε sign(∇L)` restricted to the subset of largest gradient ℓ1 mass.
///
/// The gradient is taken at a point drawn uniformly from the ℓ∞ ball of
/// radius `dither`; with `y = f(x)` and no dither it vanishes.
pub fn subset_attack_linear(
    ctx: &RegressionContext<'_>,
    partition: &Partition,
    eps: f64,
    dither: f64,
    seed: u64,
) -> Result<AttackReport> {
    multi_subset_attack(ctx, partition, eps, 1, dither, seed)
}

/// `T` linear subset steps, each on a subset not touched before.
pub fn multi_subset_attack(
    ctx: &RegressionContext<'_>,
    partition: &Partition,
    eps: f64,
    steps: usize,
    dither: f64,
    seed: u64,
) -> Result<AttackReport> {
    let start = Instant::now();
    partition.validate(ctx.x.len())?;
    if steps == 0 {
        return Err(AttackError::InvalidConfig("T must be at least 1".into()));
    }
    if steps > partition.len() {
        return Err(AttackError::TooManySubsets {
            subsets: steps,
            available: partition.len(),
        });
    }
    if !(eps.is_finite() && eps >= 0.0 && dither >= 0.0 && dither <= eps) {
        return Err(AttackError::InvalidConfig(format!(
            "need 0 <= dither ({dither}) <= eps ({eps})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut used = vec![false; partition.len()];
    let mut chosen = Vec::with_capacity(steps);
    let mut eta = vec![0.0; ctx.x.len()];
    let mut trajectory = vec![ctx.loss_at(&eta)?];
    for t in 0..steps {
        let g = dithered_gradient(&eta, Exponent::INF, dither, &mut rng, |p| ctx.grad_at(p))?
            .ok_or(AttackError::ZeroGradient { iteration: t })?;
        let s = best_linear_subset(&g, partition, &used);
        for &i in partition.subset(s) {
            eta[i] = eps * sign(g[i]);
        }
        used[s] = true;
        chosen.push(s);
        trajectory.push(ctx.loss_at(&eta)?);
    }
    let objective = None;
    Ok(ctx.report(eta, trajectory, steps, chosen, objective, None, start))
}

/// Dithered iterative linearization maximizing `‖f(x + η) − y‖²`.
///
/// Same driver as the classification attack with the step sign flipped. A
/// vanishing gradient on the first step is an error; later it ends the run
/// early with a note.
pub fn linear_attack(ctx: &RegressionContext<'_>, config: &AttackConfig) -> Result<AttackReport> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = rng_from_seed(config.seed);
    let step_budget = config.eps / config.steps as f64;
    let mut eta = vec![0.0; ctx.x.len()];
    let mut trajectory = vec![ctx.loss_at(&eta)?];
    if config.eps == 0.0 {
        return Ok(ctx.report(eta, trajectory, 0, Vec::new(), None, None, start));
    }
    let mut used = 0;
    let mut note = None;
    for t in 0..config.steps {
        let g = dithered_gradient(&eta, config.p, config.dither.radius(t), &mut rng, |p| {
            ctx.grad_at(p)
        })?;
        let Some(g) = g else {
            if t == 0 {
                return Err(AttackError::ZeroGradient { iteration: 0 });
            }
            note = Some(format!(
                "stalled at iteration {t}: gradient vanished after {MAX_DITHER_RETRIES} dithers"
            ));
            break;
        };
        let step = dual_maximizer(&g, config.p, step_budget)?;
        eta.iter_mut().zip(&step).for_each(|(e, s)| *e -= s);
        used = t + 1;
        trajectory.push(ctx.loss_at(&eta)?);
    }
    if lp_norm(&eta, config.p) > config.eps * (1.0 + BUDGET_RTOL) {
        project_to_ball(&mut eta, config.p, config.eps);
        *trajectory.last_mut().expect("non-empty") = ctx.loss_at(&eta)?;
    }
    Ok(ctx.report(eta, trajectory, used, Vec::new(), None, note, start))
}

/// A fully specified regression attack, ready to run on any example.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressAttack {
    QuadL2 {
        eps: f64,
    },
    QuadL1 {
        eps: f64,
    },
    QuadLinf {
        eps: f64,
    },
    SubsetQuad {
        partition: Partition,
        eps: f64,
    },
    SubsetLinear {
        partition: Partition,
        eps: f64,
        dither: f64,
        seed: u64,
    },
    MultiSubset {
        partition: Partition,
        eps: f64,
        steps: usize,
        dither: f64,
        seed: u64,
    },
    Linear {
        config: AttackConfig,
    },
    /// Random baseline with the same budget (`p ∈ {2, ∞}`).
    Random {
        p: Exponent,
        eps: f64,
        seed: u64,
    },
    /// `T` random subsets filled with random `±ε` entries.
    RandomSubsets {
        partition: Partition,
        eps: f64,
        steps: usize,
        seed: u64,
    },
}

impl RegressAttack {
    /// `(p, ε)` when the attack promises `‖η‖_p ≤ ε`.
    pub fn budget(&self) -> (Exponent, f64) {
        match self {
            RegressAttack::QuadL2 { eps } => (Exponent::TWO, *eps),
            RegressAttack::QuadL1 { eps } => (Exponent::ONE, *eps),
            RegressAttack::QuadLinf { eps }
            | RegressAttack::SubsetQuad { eps, .. }
            | RegressAttack::SubsetLinear { eps, .. }
            | RegressAttack::MultiSubset { eps, .. }
            | RegressAttack::RandomSubsets { eps, .. } => (Exponent::INF, *eps),
            RegressAttack::Linear { config } => (config.p, config.eps),
            RegressAttack::Random { p, eps, .. } => (*p, *eps),
        }
    }

    /// Number of partition subsets the perturbation must touch, for subset attacks.
    pub fn support(&self) -> Option<(&Partition, usize)> {
        match self {
            RegressAttack::SubsetQuad { partition, .. }
            | RegressAttack::SubsetLinear { partition, .. } => Some((partition, 1)),
            RegressAttack::MultiSubset {
                partition, steps, ..
            }
            | RegressAttack::RandomSubsets {
                partition, steps, ..
            } => Some((partition, *steps)),
            _ => None,
        }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            RegressAttack::QuadL2 { eps: e }
            | RegressAttack::QuadL1 { eps: e }
            | RegressAttack::QuadLinf { eps: e }
            | RegressAttack::SubsetQuad { eps: e, .. }
            | RegressAttack::Random { eps: e, .. }
            | RegressAttack::RandomSubsets { eps: e, .. } => *e = eps,
            RegressAttack::SubsetLinear { eps: e, dither, .. }
            | RegressAttack::MultiSubset { eps: e, dither, .. } => {
                if *e > 0.0 {
                    *dither *= eps / *e;
                } else {
                    *dither = dither.min(eps);
                }
                *e = eps;
            }
            RegressAttack::Linear { config } => {
                let old = config.eps;
                let rescale = |r: f64| if old > 0.0 { r * eps / old } else { r.min(eps) };
                use crate::classify::DitherSchedule as D;
                config.dither = match &config.dither {
                    D::None => D::None,
                    D::First(r) => D::First(rescale(*r)),
                    D::All(r) => D::All(rescale(*r)),
                    D::Custom(v) => D::Custom(v.iter().map(|r| rescale(*r)).collect()),
                };
                config.eps = eps;
            }
        }
        out
    }

    /// Runs on one example; randomized attacks draw from `derive_seed(seed, index)`.
    pub fn run(&self, ctx: &RegressionContext<'_>, index: u64) -> Result<AttackReport> {
        use crate::rng::derive_seed;
        match self {
            RegressAttack::QuadL2 { eps } => quadratic_l2(ctx, *eps),
            RegressAttack::QuadL1 { eps } => quadratic_l1(ctx, *eps),
            RegressAttack::QuadLinf { eps } => quadratic_linf_greedy(ctx, *eps),
            RegressAttack::SubsetQuad { partition, eps } => {
                subset_attack_quadratic(ctx, partition, *eps)
            }
            RegressAttack::SubsetLinear {
                partition,
                eps,
                dither,
                seed,
            } => subset_attack_linear(ctx, partition, *eps, *dither, derive_seed(*seed, index)),
            RegressAttack::MultiSubset {
                partition,
                eps,
                steps,
                dither,
                seed,
            } => multi_subset_attack(
                ctx,
                partition,
                *eps,
                *steps,
                *dither,
                derive_seed(*seed, index),
            ),
            RegressAttack::Linear { config } => {
                let cfg = config.clone().with_seed(derive_seed(config.seed, index));
                linear_attack(ctx, &cfg)
            }
            RegressAttack::Random { p, eps, seed } => {
                random_regression(ctx, *p, *eps, derive_seed(*seed, index))
            }
            RegressAttack::RandomSubsets {
                partition,
                eps,
                steps,
                seed,
            } => random_subsets(ctx, partition, *eps, *steps, derive_seed(*seed, index)),
        }
    }
}

pub fn random_regression(
    ctx: &RegressionContext<'_>,
    p: Exponent,
    eps: f64,
    seed: u64,
) -> Result<AttackReport> {
    let start = Instant::now();
    let eta = crate::classify::random_perturbation(ctx.x.len(), p, eps, seed)?;
    let trajectory = vec![ctx.loss_at(&vec![0.0; ctx.x.len()])?, ctx.loss_at(&eta)?];
    Ok(ctx.report(eta, trajectory, 1, Vec::new(), None, None, start))
}

/// `T` distinct subsets chosen uniformly, each filled with independent `±ε` entries.
pub fn random_subsets(
    ctx: &RegressionContext<'_>,
    partition: &Partition,
    eps: f64,
    steps: usize,
    seed: u64,
) -> Result<AttackReport> {
    use rand::seq::index::sample;
    use rand::Rng;
    let start = Instant::now();
    partition.validate(ctx.x.len())?;
    if steps > partition.len() {
        return Err(AttackError::TooManySubsets {
            subsets: steps,
            available: partition.len(),
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut chosen = sample(&mut rng, partition.len(), steps).into_vec();
    chosen.sort_unstable();
    let mut eta = vec![0.0; ctx.x.len()];
    for &s in &chosen {
        for &i in partition.subset(s) {
            eta[i] = if rng.random::<bool>() { eps } else { -eps };
        }
    }
    let trajectory = vec![ctx.loss_at(&vec![0.0; ctx.x.len()])?, ctx.loss_at(&eta)?];
    Ok(ctx.report(eta, trajectory, 1, chosen, None, None, start))
}
