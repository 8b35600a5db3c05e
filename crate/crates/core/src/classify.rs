//! Attacks on classifiers.
//!
//! The reference quantity is the margin loss
//!
//! ```text
//! L(x, η) = f_k(x + η) − max_{l ≠ k} f_l(x + η)
//! ```
//!
//! where `k` is the reference class. `L < 0` means the decision changed.
//! Linearizing `L` around `η = 0` (or around a dithered point) turns every
//! attack here into a closed-form dual-norm problem:
//!
//! - [`gnm`] minimizes the linearized loss inside an ℓp ball of radius ε,
//! - [`min_norm_attack`] finds the smallest η that zeroes the linearized loss,
//! - [`iterative_attack`] repeats the GNM step T times with budget ε/T,
//!   optionally evaluating the gradient at randomly dithered points.
//!
//! Swapping the loss ([`LossKind`]) and the iteration/dither schedule recovers
//! FGSM, BIM, PGD, targeted attacks and the single-score variant.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::model::{log_sum_exp, softmax, Model};
use crate::norms::{dual_maximizer, lp_norm, project_to_ball, Exponent, NormError, BUDGET_RTOL};
use crate::report::{AttackError, AttackReport, Norms};
use crate::rng::{derive_seed, gaussian_vec, rng_from_seed, sample_lp_ball, AttackRng};
use crate::tensor::{add, argmax, dot, unit};

use rand::Rng;

/// Number of fresh dithers tried after a vanishing gradient before giving up.
pub const MAX_DITHER_RETRIES: usize = 5;
/// Relative overshoot applied to the accumulated DeepFool-style step.
pub const DEFAULT_OVERSHOOT: f64 = 1e-6;

type Result<T> = std::result::Result<T, AttackError>;

/// The loss an attack drives down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `f_k − max_{l≠k} f_l`.
    Margin,
    /// `f_k` alone; avoids the search over competitors.
    Simplified,
    /// Negative cross-entropy of the reference class. Outputs are read as
    /// logits unless the model ends in a softmax.
    CrossEntropy,
    /// `f_k − f_l` for a fixed target `l`; success means `l` wins.
    Targeted(usize),
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Margin => f.write_str("margin"),
            LossKind::Simplified => f.write_str("simplified"),
            LossKind::CrossEntropy => f.write_str("cross-entropy"),
            LossKind::Targeted(l) => write!(f, "targeted:{l}"),
        }
    }
}

impl FromStr for LossKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "margin" => Ok(LossKind::Margin),
            "simplified" => Ok(LossKind::Simplified),
            "cross-entropy" | "cross_entropy" | "ce" => Ok(LossKind::CrossEntropy),
            t => match t.strip_prefix("targeted:") {
                Some(l) => l
                    .parse()
                    .map(LossKind::Targeted)
                    .map_err(|_| AttackError::InvalidConfig(format!("bad target class in {s:?}"))),
                None => Err(AttackError::InvalidConfig(format!(
                    "unknown loss {s:?} (expected margin, simplified, cross-entropy or targeted:<l>)"
                ))),
            },
        }
    }
}

/// A model, a clean input and the class the attack moves away from.
#[derive(Debug, Clone)]
pub struct MarginContext<'m> {
    model: &'m Model,
    x: Vec<f64>,
    class: usize,
    clean_prediction: usize,
    loss: LossKind,
}

impl<'m> MarginContext<'m> {
    /// Reference class is the model's own prediction `argmax_l f_l(x)`.
    pub fn new(model: &'m Model, x: &[f64], loss: LossKind) -> Result<Self> {
        let pred = argmax(&model.forward(x)?);
        Self::build(model, x, pred, pred, loss)
    }

    /// Reference class is a ground-truth label, which may disagree with the prediction.
    pub fn with_label(model: &'m Model, x: &[f64], label: usize, loss: LossKind) -> Result<Self> {
        let pred = argmax(&model.forward(x)?);
        Self::build(model, x, label, pred, loss)
    }

    fn build(
        model: &'m Model,
        x: &[f64],
        class: usize,
        pred: usize,
        loss: LossKind,
    ) -> Result<Self> {
        let classes = model.output_dim();
        if classes < 2 {
            return Err(AttackError::NoCompetitor(classes));
        }
        if class >= classes {
            return Err(AttackError::ClassOutOfRange { class, classes });
        }
        if let LossKind::Targeted(l) = loss {
            if l >= classes {
                return Err(AttackError::ClassOutOfRange { class: l, classes });
            }
            if l == class {
                return Err(AttackError::TargetIsSource(l));
            }
        }
        Ok(Self {
            model,
            x: x.to_vec(),
            class,
            clean_prediction: pred,
            loss,
        })
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn with_loss(&self, loss: LossKind) -> Result<Self> {
        Self::build(self.model, &self.x, self.class, self.clean_prediction, loss)
    }

    /// The clean input is already assigned to another class than the reference.
    pub fn is_misclassified(&self) -> bool {
        self.clean_prediction != self.class
    }

    pub fn predict(&self, eta: &[f64]) -> Result<usize> {
        Ok(argmax(&self.model.forward(&add(&self.x, eta))?))
    }

    /// The prediction moved away from the reference class, or onto the target in targeted mode.
    pub fn is_success(&self, prediction: usize) -> bool {
        match self.loss {
            LossKind::Targeted(l) => prediction == l,
            _ => prediction != self.class,
        }
    }

    /// Loss value and output-space cotangent `∂L/∂f` at outputs `f`.
    fn loss_from_outputs(&self, f: &[f64]) -> (f64, Vec<f64>) {
        let k = self.class;
        let n = f.len();
        match self.loss {
            LossKind::Margin => {
                let l = strongest_competitor(f, k);
                let mut g = unit(n, k);
                g[l] -= 1.0;
                (f[k] - f[l], g)
            }
            LossKind::Simplified => (f[k], unit(n, k)),
            LossKind::Targeted(l) => {
                let mut g = unit(n, k);
                g[l] -= 1.0;
                (f[k] - f[l], g)
            }
            LossKind::CrossEntropy => {
                if self.model.ends_with_softmax() {
                    let p = f[k].max(f64::MIN_POSITIVE);
                    let mut g = vec![0.0; n];
                    g[k] = 1.0 / p;
                    (p.ln(), g)
                } else {
                    let s = softmax(f);
                    let g = s
                        .iter()
                        .enumerate()
                        .map(|(i, si)| if i == k { 1.0 - si } else { -si })
                        .collect();
                    (f[k] - log_sum_exp(f), g)
                }
            }
        }
    }

    pub fn loss_at(&self, eta: &[f64]) -> Result<f64> {
        let f = self.model.forward(&add(&self.x, eta))?;
        Ok(self.loss_from_outputs(&f).0)
    }

    /// `(L(x, η), ∇_η L(x, η))`.
    pub fn loss_and_grad(&self, eta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let lin = self.model.linearize(&add(&self.x, eta))?;
        let (value, cot) = self.loss_from_outputs(lin.output());
        Ok((value, lin.vjp(&cot)?))
    }

    fn zero_report(
        &self,
        start: Instant,
        success: bool,
        note: Option<String>,
    ) -> Result<AttackReport> {
        let eta = vec![0.0; self.x.len()];
        let loss = self.loss_at(&eta)?;
        Ok(AttackReport {
            norms: Norms::of(&eta),
            eta,
            success,
            loss_before: loss,
            loss_after: loss,
            predicted_class_after: Some(self.clean_prediction),
            iterations_used: 0,
            loss_trajectory: vec![loss],
            subsets: Vec::new(),
            objective: None,
            note,
            elapsed: start.elapsed(),
        })
    }

    fn finish(
        &self,
        eta: Vec<f64>,
        trajectory: Vec<f64>,
        iterations: usize,
        objective: Option<f64>,
        note: Option<String>,
        start: Instant,
    ) -> Result<AttackReport> {
        let pred = self.predict(&eta)?;
        let loss_after = self.loss_at(&eta)?;
        Ok(AttackReport {
            norms: Norms::of(&eta),
            eta,
            success: self.is_success(pred),
            loss_before: trajectory[0],
            loss_after,
            predicted_class_after: Some(pred),
            iterations_used: iterations,
            loss_trajectory: trajectory,
            subsets: Vec::new(),
            objective,
            note,
            elapsed: start.elapsed(),
        })
    }

    fn misclassified_report(&self, start: Instant) -> Result<AttackReport> {
        self.zero_report(start, true, Some("input already misclassified".into()))
    }
}

/// Competitor with the highest score, lowest index on ties.
fn strongest_competitor(f: &[f64], k: usize) -> usize {
    let mut best: Option<usize> = None;
    for (l, &v) in f.iter().enumerate() {
        if l != k && best.is_none_or(|b| v > f[b]) {
            best = Some(l);
        }
    }
    best.expect("at least two classes")
}

/// `f_k(x+η) − max_{l≠k} f_l(x+η)` for the context's loss.
pub fn margin_loss(ctx: &MarginContext<'_>, eta: &[f64]) -> Result<f64> {
    ctx.loss_at(eta)
}

pub fn grad_margin_loss(ctx: &MarginContext<'_>, eta: &[f64]) -> Result<Vec<f64>> {
    Ok(ctx.loss_and_grad(eta)?.1)
}

fn zero_gradient(e: NormError, iteration: usize) -> AttackError {
    match e {
        NormError::ZeroGradient => AttackError::ZeroGradient { iteration },
        other => other.into(),
    }
}

/// Smallest ε for which the linearized attack can reach `L ≤ 0`: `L(x,0) / ‖∇L(x,0)‖_q`.
///
/// Zero when the input is already misclassified or sits on the boundary.
pub fn feasibility_bound(ctx: &MarginContext<'_>, p: Exponent) -> Result<f64> {
    if ctx.is_misclassified() {
        return Ok(0.0);
    }
    let (l0, g) = ctx.loss_and_grad(&vec![0.0; ctx.x.len()])?;
    if l0 <= 0.0 {
        return Ok(0.0);
    }
    let gq = lp_norm(&g, p.dual());
    if gq == 0.0 {
        return Err(AttackError::ZeroGradient { iteration: 0 });
    }
    Ok(l0 / gq)
}

/// Closed-form minimizer of the linearized loss over `‖η‖_p ≤ ε`.
pub fn gnm(ctx: &MarginContext<'_>, p: Exponent, eps: f64) -> Result<AttackReport> {
    let start = Instant::now();
    if ctx.is_misclassified() {
        return ctx.misclassified_report(start);
    }
    if eps == 0.0 {
        return ctx.zero_report(start, false, None);
    }
    let (l0, g) = ctx.loss_and_grad(&vec![0.0; ctx.x.len()])?;
    let eta = dual_maximizer(&g, p, eps).map_err(|e| zero_gradient(e, 0))?;
    let linearized = l0 + dot(&eta, &g);
    let l1 = ctx.loss_at(&eta)?;
    ctx.finish(eta, vec![l0, l1], 1, Some(linearized), None, start)
}

/// Minimal-ℓp perturbation that drives the linearized loss to zero.
///
/// `η = −L(x,0) · sign(g) ⊙ |g|^{q−1} / ‖g‖_q^q` with `g = ∇L(x,0)`, so
/// `‖η‖_p` equals [`feasibility_bound`] and η points the same way as [`gnm`].
pub fn min_norm_attack(ctx: &MarginContext<'_>, p: Exponent) -> Result<AttackReport> {
    let start = Instant::now();
    if ctx.is_misclassified() {
        return ctx.misclassified_report(start);
    }
    let (l0, g) = ctx.loss_and_grad(&vec![0.0; ctx.x.len()])?;
    if l0 < 0.0 {
        return Err(AttackError::NonPositiveLoss(l0));
    }
    let gq = lp_norm(&g, p.dual());
    if gq == 0.0 {
        return Err(AttackError::ZeroGradient { iteration: 0 });
    }
    let eta = dual_maximizer(&g, p, l0 / gq)?;
    let linearized = l0 + dot(&eta, &g);
    let l1 = ctx.loss_at(&eta)?;
    ctx.finish(eta, vec![l0, l1], 1, Some(linearized), None, start)
}

/// Dither radius `ε̃_t` per iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum DitherSchedule {
    None,
    /// Radius on the first iteration only (PGD-style random start).
    First(f64),
    All(f64),
    /// Explicit radii; iterations past the end use zero.
    Custom(Vec<f64>),
}

impl DitherSchedule {
    pub fn radius(&self, t: usize) -> f64 {
        match self {
            DitherSchedule::None => 0.0,
            DitherSchedule::First(r) => {
                if t == 0 {
                    *r
                } else {
                    0.0
                }
            }
            DitherSchedule::All(r) => *r,
            DitherSchedule::Custom(v) => v.get(t).copied().unwrap_or(0.0),
        }
    }

    fn max_radius(&self) -> f64 {
        match self {
            DitherSchedule::None => 0.0,
            DitherSchedule::First(r) | DitherSchedule::All(r) => *r,
            DitherSchedule::Custom(v) => v.iter().copied().fold(0.0, f64::max),
        }
    }

    fn min_radius(&self) -> f64 {
        match self {
            DitherSchedule::None => 0.0,
            DitherSchedule::First(r) | DitherSchedule::All(r) => *r,
            DitherSchedule::Custom(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Settings of the iterative driver.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub p: Exponent,
    pub eps: f64,
    /// Number of iterations `T`; each step has ℓp norm `ε / T`.
    pub steps: usize,
    pub dither: DitherSchedule,
    pub seed: u64,
    /// Stop as soon as the attack succeeds.
    pub early_stop: bool,
}

impl AttackConfig {
    pub fn new(p: Exponent, eps: f64, steps: usize) -> Self {
        Self {
            p,
            eps,
            steps,
            dither: DitherSchedule::None,
            seed: 0,
            early_stop: true,
        }
    }

    pub fn with_dither(mut self, dither: DitherSchedule) -> Self {
        self.dither = dither;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_early_stop(mut self, on: bool) -> Self {
        self.early_stop = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(AttackError::InvalidConfig(format!(
                "eps must be finite and >= 0, got {}",
                self.eps
            )));
        }
        if self.steps == 0 {
            return Err(AttackError::InvalidConfig("T must be at least 1".into()));
        }
        let (lo, hi) = (self.dither.min_radius(), self.dither.max_radius());
        if !(lo >= 0.0 && hi <= self.eps && hi.is_finite()) {
            return Err(AttackError::InvalidConfig(format!(
                "dither radii must lie in [0, eps = {}]",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Evaluates `grad(eta + dither)` with up to [`MAX_DITHER_RETRIES`] fresh
/// dithers while the gradient vanishes. `None` means every attempt was zero.
pub(crate) fn dithered_gradient<F>(
    eta: &[f64],
    p: Exponent,
    radius: f64,
    rng: &mut AttackRng,
    mut grad: F,
) -> Result<Option<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    for _ in 0..=MAX_DITHER_RETRIES {
        let d = sample_lp_ball(rng, eta.len(), p, radius);
        let g = grad(&add(eta, &d))?;
        if g.iter().any(|&v| v != 0.0) {
            return Ok(Some(g));
        }
        if radius == 0.0 {
            break;
        }
    }
    Ok(None)
}

/// T linearized steps of size ε/T, each at a dithered point `η_t + random(ε̃_t)`.
pub fn iterative_attack(ctx: &MarginContext<'_>, config: &AttackConfig) -> Result<AttackReport> {
    config.validate()?;
    let start = Instant::now();
    if ctx.is_misclassified() {
        return ctx.misclassified_report(start);
    }
    if config.eps == 0.0 {
        return ctx.zero_report(start, false, None);
    }
    let mut rng = rng_from_seed(config.seed);
    let step_budget = config.eps / config.steps as f64;
    let mut eta = vec![0.0; ctx.x.len()];
    let mut trajectory = vec![ctx.loss_at(&eta)?];
    let mut used = 0;
    let mut note = None;
    for t in 0..config.steps {
        let radius = config.dither.radius(t);
        let g = dithered_gradient(&eta, config.p, radius, &mut rng, |point| {
            Ok(ctx.loss_and_grad(point)?.1)
        })?;
        let Some(g) = g else {
            note = Some(format!(
                "stalled at iteration {t}: gradient vanished after {MAX_DITHER_RETRIES} dithers"
            ));
            break;
        };
        let step = dual_maximizer(&g, config.p, step_budget)?;
        eta.iter_mut().zip(&step).for_each(|(e, s)| *e += s);
        used = t + 1;
        trajectory.push(ctx.loss_at(&eta)?);
        if config.early_stop && ctx.is_success(ctx.predict(&eta)?) {
            break;
        }
    }
    // A sum of T steps of norm ε/T stays in the ball up to rounding.
    if lp_norm(&eta, config.p) > config.eps * (1.0 + BUDGET_RTOL) {
        project_to_ball(&mut eta, config.p, config.eps);
    }
    let mut report = ctx.finish(eta, trajectory, used, None, note.clone(), start)?;
    if note.is_some() && used == 0 {
        report.success = false;
    }
    Ok(report)
}

/// Iterated minimal-norm steps against the nearest linearized boundary.
///
/// Each iteration picks the competitor `l̂` minimizing
/// `|f_k − f_l| / ‖∇f_k − ∇f_l‖_q` and takes the closed-form minimal-norm step
/// for the pair loss `f_k − f_l̂`. Stops once `k` is no longer the strict
/// winner. Not budget constrained: the report carries the achieved norm.
pub fn deepfool_style(
    ctx: &MarginContext<'_>,
    p: Exponent,
    max_iter: usize,
) -> Result<AttackReport> {
    deepfool_style_with(ctx, p, max_iter, DEFAULT_OVERSHOOT)
}

pub fn deepfool_style_with(
    ctx: &MarginContext<'_>,
    p: Exponent,
    max_iter: usize,
    overshoot: f64,
) -> Result<AttackReport> {
    let start = Instant::now();
    if ctx.is_misclassified() {
        return ctx.misclassified_report(start);
    }
    let k = ctx.class;
    let q = p.dual();
    let model = ctx.model;
    let kk = model.output_dim();
    let scale = 1.0 + overshoot;
    let margin = |f: &[f64]| f[k] - f[strongest_competitor(f, k)];

    let mut r = vec![0.0; ctx.x.len()];
    let mut trajectory = vec![margin(&model.forward(&ctx.x)?)];
    let mut used = 0;
    for _ in 0..max_iter {
        let eta: Vec<f64> = r.iter().map(|v| scale * v).collect();
        let lin = model.linearize(&add(&ctx.x, &eta))?;
        let f = lin.output().to_vec();
        if margin(&f) <= 0.0 {
            break;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for l in (0..kk).filter(|&l| l != k) {
            let mut cot = unit(kk, k);
            cot[l] -= 1.0;
            let w = lin.vjp(&cot)?;
            let wq = lp_norm(&w, q);
            if wq == 0.0 {
                continue;
            }
            let dist = (f[k] - f[l]).abs() / wq;
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                let step = dual_maximizer(&w, p, dist)?;
                best = Some((dist, step));
            }
        }
        let Some((_, step)) = best else {
            return Err(AttackError::ZeroGradient { iteration: used });
        };
        r.iter_mut().zip(&step).for_each(|(a, b)| *a += b);
        used += 1;
        let eta: Vec<f64> = r.iter().map(|v| scale * v).collect();
        trajectory.push(margin(&model.forward(&add(&ctx.x, &eta))?));
    }
    let eta: Vec<f64> = r.iter().map(|v| scale * v).collect();
    let f = model.forward(&add(&ctx.x, &eta))?;
    let reached = margin(&f) <= 0.0;
    Ok(AttackReport {
        norms: Norms::of(&eta),
        eta,
        success: reached,
        loss_before: trajectory[0],
        loss_after: *trajectory.last().expect("non-empty"),
        predicted_class_after: Some(argmax(&f)),
        iterations_used: used,
        loss_trajectory: trajectory,
        subsets: Vec::new(),
        objective: None,
        note: (!reached).then(|| format!("boundary not reached in {max_iter} iterations")),
        elapsed: start.elapsed(),
    })
}

/// Random baseline: `±ε` Bernoulli entries for `p = ∞`, `ε w / ‖w‖₂` with Gaussian `w` for `p = 2`.
pub fn random_perturbation(m: usize, p: Exponent, eps: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    if p.is_infinite() {
        Ok((0..m)
            .map(|_| if rng.random::<bool>() { eps } else { -eps })
            .collect())
    } else if p == Exponent::TWO {
        let w = gaussian_vec(&mut rng, m);
        let n = lp_norm(&w, Exponent::TWO);
        Ok(w.into_iter().map(|v| eps * v / n).collect())
    } else {
        Err(AttackError::UnsupportedExponent(p))
    }
}

pub fn random_attack(
    ctx: &MarginContext<'_>,
    p: Exponent,
    eps: f64,
    seed: u64,
) -> Result<AttackReport> {
    let start = Instant::now();
    if ctx.is_misclassified() {
        return ctx.misclassified_report(start);
    }
    let eta = random_perturbation(ctx.x.len(), p, eps, seed)?;
    let trajectory = vec![ctx.loss_at(&vec![0.0; ctx.x.len()])?, ctx.loss_at(&eta)?];
    ctx.finish(eta, trajectory, 1, None, None, start)
}

/// A fully specified classification attack, ready to run on any example.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifyAttack {
    Gnm {
        p: Exponent,
        eps: f64,
        loss: LossKind,
    },
    MinNorm {
        p: Exponent,
        loss: LossKind,
    },
    Iterative {
        config: AttackConfig,
        loss: LossKind,
    },
    DeepFool {
        p: Exponent,
        max_iter: usize,
    },
    Random {
        p: Exponent,
        eps: f64,
        seed: u64,
    },
}

impl ClassifyAttack {
    pub fn fgsm(eps: f64) -> Self {
        ClassifyAttack::Iterative {
            config: AttackConfig::new(Exponent::INF, eps, 1),
            loss: LossKind::CrossEntropy,
        }
    }

    pub fn bim(eps: f64, steps: usize) -> Self {
        ClassifyAttack::Iterative {
            config: AttackConfig::new(Exponent::INF, eps, steps),
            loss: LossKind::CrossEntropy,
        }
    }

    pub fn pgd(eps: f64, steps: usize, seed: u64) -> Self {
        ClassifyAttack::Iterative {
            config: AttackConfig::new(Exponent::INF, eps, steps)
                .with_dither(DitherSchedule::First(eps))
                .with_seed(seed),
            loss: LossKind::CrossEntropy,
        }
    }

    pub fn loss(&self) -> LossKind {
        match self {
            ClassifyAttack::Gnm { loss, .. }
            | ClassifyAttack::MinNorm { loss, .. }
            | ClassifyAttack::Iterative { loss, .. } => *loss,
            ClassifyAttack::DeepFool { .. } | ClassifyAttack::Random { .. } => LossKind::Margin,
        }
    }

    /// `(p, ε)` when the attack promises `‖η‖_p ≤ ε`.
    pub fn budget(&self) -> Option<(Exponent, f64)> {
        match self {
            ClassifyAttack::Gnm { p, eps, .. } | ClassifyAttack::Random { p, eps, .. } => {
                Some((*p, *eps))
            }
            ClassifyAttack::Iterative { config, .. } => Some((config.p, config.eps)),
            ClassifyAttack::MinNorm { .. } | ClassifyAttack::DeepFool { .. } => None,
        }
    }

    /// Same attack with a different budget; a dither equal to the old ε follows the new one.
    pub fn with_eps(&self, eps: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            ClassifyAttack::Gnm { eps: e, .. } | ClassifyAttack::Random { eps: e, .. } => *e = eps,
            ClassifyAttack::Iterative { config, .. } => {
                let old = config.eps;
                let rescale = |r: f64| if old > 0.0 { r * eps / old } else { r.min(eps) };
                config.dither = match &config.dither {
                    DitherSchedule::None => DitherSchedule::None,
                    DitherSchedule::First(r) => DitherSchedule::First(rescale(*r)),
                    DitherSchedule::All(r) => DitherSchedule::All(rescale(*r)),
                    DitherSchedule::Custom(v) => {
                        DitherSchedule::Custom(v.iter().map(|r| rescale(*r)).collect())
                    }
                };
                config.eps = eps;
            }
            ClassifyAttack::MinNorm { .. } | ClassifyAttack::DeepFool { .. } => {}
        }
        out
    }

    /// Runs on one example; randomized attacks draw from `derive_seed(seed, index)`.
    pub fn run(
        &self,
        model: &Model,
        x: &[f64],
        label: Option<usize>,
        index: u64,
    ) -> Result<AttackReport> {
        let ctx = match label {
            Some(l) => MarginContext::with_label(model, x, l, self.loss())?,
            None => MarginContext::new(model, x, self.loss())?,
        };
        self.run_on(&ctx, index)
    }

    pub fn run_on(&self, ctx: &MarginContext<'_>, index: u64) -> Result<AttackReport> {
        match self {
            ClassifyAttack::Gnm { p, eps, .. } => gnm(ctx, *p, *eps),
            ClassifyAttack::MinNorm { p, .. } => min_norm_attack(ctx, *p),
            ClassifyAttack::Iterative { config, .. } => {
                let cfg = config.clone().with_seed(derive_seed(config.seed, index));
                iterative_attack(ctx, &cfg)
            }
            ClassifyAttack::DeepFool { p, max_iter } => deepfool_style(ctx, *p, *max_iter),
            ClassifyAttack::Random { p, eps, seed } => {
                random_attack(ctx, *p, *eps, derive_seed(*seed, index))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use crate::norms::lp_norm;
    use crate::rng::gaussian_vec;
    use proptest::prelude::*;

    fn two_class(w1: &[f64], w2: &[f64]) -> Model {
        Model::linear(&[w1.to_vec(), w2.to_vec()], vec![0.0, 0.0]).unwrap()
    }

    fn random_net(seed: u64, sizes: &[usize]) -> Model {
        Model::init_mlp(
            sizes,
            Activation::Tanh,
            Activation::Identity,
            &mut rng_from_seed(seed),
        )
        .unwrap()
    }

    #[test]
    fn margin_of_linear_binary_model() {
        let m = two_class(&[1.0, 2.0], &[-1.0, 0.5]);
        let x = [0.4, 0.3];
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        let expected = (1.0 + 1.0) * 0.4 + (2.0 - 0.5) * 0.3;
        assert!((margin_loss(&ctx, &[0.0, 0.0]).unwrap() - expected).abs() < 1e-15);
        assert_eq!(grad_margin_loss(&ctx, &[0.0, 0.0]).unwrap(), vec![2.0, 1.5]);
    }

    #[test]
    fn margin_is_zero_on_the_boundary() {
        let m = two_class(&[1.0, 0.0], &[0.0, 1.0]);
        let ctx = MarginContext::new(&m, &[0.5, 0.5], LossKind::Margin).unwrap();
        assert_eq!(margin_loss(&ctx, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(feasibility_bound(&ctx, Exponent::TWO).unwrap(), 0.0);
    }

    #[test]
    fn margin_gradient_matches_finite_differences() {
        let m = random_net(1, &[4, 8, 3]);
        let mut rng = rng_from_seed(2);
        let x = gaussian_vec(&mut rng, 4);
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        let eta = gaussian_vec(&mut rng, 4)
            .iter()
            .map(|v| 0.05 * v)
            .collect::<Vec<_>>();
        let g = grad_margin_loss(&ctx, &eta).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut plus = eta.clone();
            let mut minus = eta.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (margin_loss(&ctx, &plus).unwrap() - margin_loss(&ctx, &minus).unwrap())
                / (2.0 * h);
            assert!(
                (fd - g[j]).abs() <= 1e-4 * g[j].abs().max(1.0),
                "{j}: {fd} vs {}",
                g[j]
            );
        }
    }

    #[test]
    fn single_output_has_no_competitor() {
        let m = Model::identity(1);
        assert!(matches!(
            MarginContext::new(&m, &[1.0], LossKind::Margin),
            Err(AttackError::NoCompetitor(1))
        ));
    }

    #[test]
    fn targeted_requires_a_different_class() {
        let m = two_class(&[1.0, 0.0], &[0.0, 1.0]);
        assert!(matches!(
            MarginContext::new(&m, &[1.0, 0.0], LossKind::Targeted(0)),
            Err(AttackError::TargetIsSource(0))
        ));
        assert!(MarginContext::new(&m, &[1.0, 0.0], LossKind::Targeted(5)).is_err());
    }

    #[test]
    fn loss_kind_parsing() {
        assert_eq!(
            "targeted:3".parse::<LossKind>().unwrap(),
            LossKind::Targeted(3)
        );
        assert_eq!(
            "cross-entropy".parse::<LossKind>().unwrap(),
            LossKind::CrossEntropy
        );
        assert!("hinge".parse::<LossKind>().is_err());
    }

    #[test]
    fn gnm_linf_is_negative_sign_of_gradient() {
        let m = random_net(3, &[5, 6, 3]);
        let x = gaussian_vec(&mut rng_from_seed(4), 5);
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        let g = grad_margin_loss(&ctx, &[0.0; 5]).unwrap();
        let r = gnm(&ctx, Exponent::INF, 0.1).unwrap();
        for (e, gi) in r.eta.iter().zip(&g) {
            assert_eq!(*e, -0.1 * crate::tensor::sign(*gi));
        }
    }

    #[test]
    fn gnm_on_linear_model_follows_the_bound() {
        let m = two_class(&[1.0, 2.0, -1.0], &[-0.5, 0.3, 0.8]);
        let x = [0.5, 0.4, -0.2];
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        for p in [Exponent::TWO, Exponent::INF, Exponent::new(3.0).unwrap()] {
            let bound = feasibility_bound(&ctx, p).unwrap();
            let diff = [1.5, 1.7, -1.8];
            let margin = dot(&diff, &x);
            assert!((bound - margin / lp_norm(&diff, p.dual())).abs() < 1e-12);
            assert!(gnm(&ctx, p, bound * 1.001).unwrap().success);
            assert!(!gnm(&ctx, p, bound / 2.0).unwrap().success);
            let at = gnm(&ctx, p, bound).unwrap();
            assert!(at.loss_after.abs() < 1e-12, "{}", at.loss_after);
        }
    }

    #[test]
    fn misclassified_input_is_left_alone() {
        let m = two_class(&[1.0, 0.0], &[0.0, 1.0]);
        let ctx = MarginContext::with_label(&m, &[0.0, 1.0], 0, LossKind::Margin).unwrap();
        assert!(ctx.is_misclassified());
        assert!(margin_loss(&ctx, &[0.0, 0.0]).unwrap() < 0.0);
        assert_eq!(feasibility_bound(&ctx, Exponent::TWO).unwrap(), 0.0);
        let r = gnm(&ctx, Exponent::INF, 0.3).unwrap();
        assert!(r.success);
        assert_eq!(r.eta, vec![0.0, 0.0]);
    }

    #[test]
    fn bound_is_invariant_to_score_scaling() {
        let a = two_class(&[1.0, 2.0], &[-1.0, 0.5]);
        let b = two_class(&[3.0, 6.0], &[-3.0, 1.5]);
        let x = [0.4, 0.3];
        let ca = MarginContext::new(&a, &x, LossKind::Margin).unwrap();
        let cb = MarginContext::new(&b, &x, LossKind::Margin).unwrap();
        let (ba, bb) = (
            feasibility_bound(&ca, Exponent::INF).unwrap(),
            feasibility_bound(&cb, Exponent::INF).unwrap(),
        );
        assert!((ba - bb).abs() < 1e-15);
    }

    #[test]
    fn min_norm_l2_is_cauchy_schwarz_step() {
        let m = random_net(6, &[4, 7, 3]);
        let x = gaussian_vec(&mut rng_from_seed(7), 4);
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        let (l0, g) = ctx.loss_and_grad(&[0.0; 4]).unwrap();
        let r = min_norm_attack(&ctx, Exponent::TWO).unwrap();
        let gg = dot(&g, &g);
        for (e, gi) in r.eta.iter().zip(&g) {
            assert!((e + l0 * gi / gg).abs() < 1e-14);
        }
        assert!((l0 + dot(&r.eta, &g)).abs() < 1e-12);
    }

    #[test]
    fn min_norm_lands_on_linear_boundary() {
        let m = two_class(&[1.0, 2.0, -1.0], &[-0.5, 0.3, 0.8]);
        let x = [0.5, 0.4, -0.2];
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        for p in [Exponent::ONE, Exponent::TWO, Exponent::INF] {
            let r = min_norm_attack(&ctx, p).unwrap();
            assert!(margin_loss(&ctx, &r.eta).unwrap().abs() < 1e-12);
            assert!((r.norm(p) - feasibility_bound(&ctx, p).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_iteration_is_gnm() {
        let m = random_net(8, &[5, 9, 4]);
        let x = gaussian_vec(&mut rng_from_seed(9), 5);
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        for p in [Exponent::TWO, Exponent::INF] {
            let a = gnm(&ctx, p, 0.2).unwrap();
            let b = iterative_attack(&ctx, &AttackConfig::new(p, 0.2, 1)).unwrap();
            assert_eq!(a.eta, b.eta);
        }
    }

    #[test]
    fn iterative_respects_budget_and_is_deterministic() {
        let m = random_net(10, &[6, 12, 3]);
        let x = gaussian_vec(&mut rng_from_seed(11), 6);
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        for p in [Exponent::new(1.5).unwrap(), Exponent::TWO, Exponent::INF] {
            let cfg = AttackConfig::new(p, 0.3, 7)
                .with_dither(DitherSchedule::All(0.1))
                .with_seed(5)
                .with_early_stop(false);
            let a = iterative_attack(&ctx, &cfg).unwrap();
            let b = iterative_attack(&ctx, &cfg).unwrap();
            assert_eq!(a.eta, b.eta);
            assert!(a.norm(p) <= 0.3 + 1e-9);
            assert_eq!(a.iterations_used, 7);
            assert_eq!(a.loss_trajectory.len(), 8);
        }
    }

    #[test]
    fn invalid_configs() {
        let m = two_class(&[1.0, 0.0], &[0.0, 1.0]);
        let ctx = MarginContext::new(&m, &[1.0, 0.0], LossKind::Margin).unwrap();
        let too_much_dither =
            AttackConfig::new(Exponent::INF, 0.1, 2).with_dither(DitherSchedule::First(0.2));
        assert!(matches!(
            iterative_attack(&ctx, &too_much_dither),
            Err(AttackError::InvalidConfig(_))
        ));
        assert!(iterative_attack(&ctx, &AttackConfig::new(Exponent::INF, 0.1, 0)).is_err());
    }

    #[test]
    fn zero_gradient_stalls_iterative_and_errors_gnm() {
        // Relu kills every gradient at this input.
        let d = crate::model::DenseLayer::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![-5.0, -6.0])
            .unwrap();
        let m = Model::new(
            2,
            2,
            vec![
                crate::model::LayerSpec::Dense(d),
                crate::model::LayerSpec::Activation(Activation::Relu),
            ],
        )
        .unwrap();
        let ctx = MarginContext::new(&m, &[0.0, 0.0], LossKind::Margin).unwrap();
        assert!(matches!(
            gnm(&ctx, Exponent::INF, 0.1),
            Err(AttackError::ZeroGradient { .. })
        ));
        let cfg = AttackConfig::new(Exponent::INF, 0.1, 3).with_dither(DitherSchedule::All(0.05));
        let r = iterative_attack(&ctx, &cfg).unwrap();
        assert!(!r.success);
        assert!(r.note.unwrap().contains("stalled"));
    }

    #[test]
    fn deepfool_on_linear_multiclass_takes_one_step() {
        let m = Model::linear(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        let x = [1.0, 0.2];
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        let r = deepfool_style(&ctx, Exponent::TWO, 50).unwrap();
        assert!(r.success);
        assert_eq!(r.iterations_used, 1);
        // Nearest boundary is class 1 at distance 0.8 / sqrt(2).
        let expected = 0.8 / 2f64.sqrt() * (1.0 + DEFAULT_OVERSHOOT);
        assert!((r.norms.l2 - expected).abs() < 1e-12);
        assert_eq!(r.predicted_class_after, Some(1));
    }

    #[test]
    fn deepfool_with_no_iterations() {
        let m = random_net(12, &[3, 5, 3]);
        let x = gaussian_vec(&mut rng_from_seed(13), 3);
        let ctx = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
        let r = deepfool_style(&ctx, Exponent::INF, 0).unwrap();
        assert_eq!(r.eta, vec![0.0; 3]);
        assert!(!r.success);
    }

    #[test]
    fn random_perturbations() {
        let v = random_perturbation(4, Exponent::INF, 0.2, 1).unwrap();
        assert!(v.iter().all(|&e| e == 0.2 || e == -0.2));
        let w = random_perturbation(9, Exponent::TWO, 0.7, 1).unwrap();
        assert!((lp_norm(&w, Exponent::TWO) - 0.7).abs() < 1e-12);
        assert_eq!(w, random_perturbation(9, Exponent::TWO, 0.7, 1).unwrap());
        assert!(matches!(
            random_perturbation(3, Exponent::ONE, 0.1, 0),
            Err(AttackError::UnsupportedExponent(_))
        ));
    }

    #[test]
    fn random_signs_are_centred() {
        let eps = 0.5;
        let n = 10_000;
        let mut mean = vec![0.0; 4];
        for s in 0..n {
            let v = random_perturbation(4, Exponent::INF, eps, s).unwrap();
            mean.iter_mut()
                .zip(&v)
                .for_each(|(m, x)| *m += x / n as f64);
        }
        let bound = 5.0 * eps / (n as f64).sqrt();
        assert!(mean.iter().all(|m| m.abs() <= bound), "{mean:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gnm_direction_invariant_to_score_scaling(seed in 0u64..1000, c in 0.1f64..10.0) {
            let m = random_net(seed, &[4, 6, 3]);
            let x = gaussian_vec(&mut rng_from_seed(seed + 1), 4);
            let scaled = {
                let mut layers = m.layers().to_vec();
                if let Some(crate::model::LayerSpec::Dense(d)) = layers.last_mut() {
                    let w: Vec<f64> = d.weights().iter().map(|v| c * v).collect();
                    let b: Vec<f64> = d.bias().iter().map(|v| c * v).collect();
                    *d = crate::model::DenseLayer::new(d.in_dim(), d.out_dim(), w, b).unwrap();
                }
                Model::new(4, 3, layers).unwrap()
            };
            let ca = MarginContext::new(&m, &x, LossKind::Margin).unwrap();
            let cb = MarginContext::new(&scaled, &x, LossKind::Margin).unwrap();
            for p in [Exponent::TWO, Exponent::INF, Exponent::new(3.0).unwrap()] {
                let a = gnm(&ca, p, 0.1).unwrap();
                let b = gnm(&cb, p, 0.1).unwrap();
                for (u, v) in a.eta.iter().zip(&b.eta) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
                let ma = min_norm_attack(&ca, p).unwrap();
                let mb = min_norm_attack(&cb, p).unwrap();
                for (u, v) in ma.eta.iter().zip(&mb.eta) {
                    prop_assert!((u - v).abs() < 1e-12 * u.abs().max(1.0));
                }
            }
        }
    }
}
