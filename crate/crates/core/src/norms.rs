//! ℓp norms, dual-norm maximizers and operator-norm solvers.
//!
//! Everything the closed-form attacks need reduces to three primitives:
//! the minimizer of a linear function over an ℓp ball ([`dual_maximizer`]),
//! the top singular pair of a Jacobian found by matrix-free power iteration
//! ([`spectral_norm_power`]) and a greedy sign assignment for the
//! ℓ∞ → ℓ2 problem over a set of columns ([`greedy_sign_vector`]).

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{Linearization, Model, ModelError};
use crate::rng::{derive_seed, gaussian_vec, rng_from_seed};
use crate::tensor::{dot, norm2, sign, unit};

#[derive(Debug, Error)]
pub enum NormError {
    #[error("invalid norm exponent {0}: p must lie in [1, ∞]")]
    InvalidExponent(String),
    #[error("gradient is identically zero; dither the linearization point")]
    ZeroGradient,
    #[error("budget must be finite and non-negative, got {0}")]
    InvalidBudget(f64),
    #[error("no columns supplied")]
    EmptyColumns,
    #[error("Jacobian is numerically zero (σ = {sigma:e})")]
    DegenerateJacobian { sigma: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Norm exponent `p ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INF: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self, NormError> {
        if p.is_nan() || p < 1.0 {
            return Err(NormError::InvalidExponent(p.to_string()));
        }
        Ok(Exponent(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Dual exponent `q = p / (p − 1)`, with 1 ↔ ∞.
    pub fn dual(self) -> Exponent {
        dual_exponent(self)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Exponent {
    type Err = NormError;

    /// Accepts `inf`, decimals such as `1.5`, and rationals such as `3/2`.
    fn from_str(s: &str) -> Result<Self, NormError> {
        let s = s.trim();
        let bad = || NormError::InvalidExponent(s.to_string());
        let value = match s.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => f64::INFINITY,
            t => match t.split_once('/') {
                Some((num, den)) => {
                    let num: f64 = num.trim().parse().map_err(|_| bad())?;
                    let den: f64 = den.trim().parse().map_err(|_| bad())?;
                    num / den
                }
                None => t.parse().map_err(|_| bad())?,
            },
        };
        Exponent::new(value).map_err(|_| bad())
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

pub fn dual_exponent(p: Exponent) -> Exponent {
    if p.0 == 1.0 {
        Exponent::INF
    } else if p.is_infinite() {
        Exponent::ONE
    } else {
        Exponent(p.0 / (p.0 - 1.0))
    }
}

/// ℓp norm; the finite case is computed on the max-scaled vector to avoid overflow.
pub fn lp_norm(v: &[f64], p: Exponent) -> f64 {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if p.is_infinite() || max == 0.0 {
        return max;
    }
    if p.0 == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if p.0 == 2.0 {
        return max * v.iter().map(|x| (x / max).powi(2)).sum::<f64>().sqrt();
    }
    max * v
        .iter()
        .map(|x| (x.abs() / max).powf(p.0))
        .sum::<f64>()
        .powf(1.0 / p.0)
}

/// Minimizer of `ηᵀg` over the ℓp ball of radius `eps`.
///
/// `η = −ε · sign(g) ⊙ |g|^{q−1} / ‖g‖_q^{q−1}`; for `p = ∞` this is
/// `−ε · sign(g)` and for `p = 1` it puts `∓ε` on the largest `|g_i|`
/// (lowest index on ties). The optimum value is `−ε‖g‖_q`.
pub fn dual_maximizer(g: &[f64], p: Exponent, eps: f64) -> Result<Vec<f64>, NormError> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(NormError::InvalidBudget(eps));
    }
    let max = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 || !max.is_finite() {
        return Err(NormError::ZeroGradient);
    }
    if p.is_infinite() {
        return Ok(g.iter().map(|&gi| -eps * sign(gi)).collect());
    }
    if p.0 == 1.0 {
        let k = g.iter().enumerate().fold(
            0,
            |best, (i, x)| if x.abs() > g[best].abs() { i } else { best },
        );
        let mut eta = vec![0.0; g.len()];
        eta[k] = -eps * sign(g[k]);
        return Ok(eta);
    }
    let q = dual_exponent(p).0;
    // Work with g / max(|g|): the direction is scale invariant.
    let powered: Vec<f64> = g.iter().map(|&gi| (gi.abs() / max).powf(q - 1.0)).collect();
    let norm = lp_norm(&powered, p);
    Ok(g.iter()
        .zip(&powered)
        .map(|(&gi, &w)| -eps * sign(gi) * w / norm)
        .collect())
}

/// Relative slack allowed on `‖η‖_p ≤ ε` for floating-point rounding.
pub const BUDGET_RTOL: f64 = 1e-12;

/// Radially scales `v` back onto the ℓp ball of radius `eps` if it lies outside.
pub fn project_to_ball(v: &mut [f64], p: Exponent, eps: f64) {
    let n = lp_norm(v, p);
    if n > eps && n > 0.0 {
        let s = eps / n;
        for x in v.iter_mut() {
            *x *= s;
        }
        // Rounding can leave the norm a hair above eps.
        let n = lp_norm(v, p);
        if n > eps {
            let s = eps / n * (1.0 - f64::EPSILON);
            for x in v.iter_mut() {
                *x *= s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            iters: 500,
            tol: 1e-10,
            seed: 0,
        }
    }
}

/// Result of [`spectral_norm_power`].
#[derive(Debug, Clone)]
pub struct SpectralEstimate {
    /// `‖J v_max‖₂`.
    pub sigma: f64,
    /// Unit ℓ2 right singular vector estimate.
    pub v_max: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
    /// σ estimate after every iteration.
    pub history: Vec<f64>,
}

const STALL_THRESHOLD: f64 = 1e-14;
const MAX_RESTARTS: usize = 4;

/// Largest singular value of `J_f(x)` by power iteration on `JᵀJ`, applied as `vjp ∘ jvp`.
pub fn spectral_norm_power(
    model: &Model,
    x: &[f64],
    opts: PowerOptions,
) -> Result<SpectralEstimate, NormError> {
    let lin = model.linearize(x)?;
    spectral_norm_power_at(&lin, opts)
}

pub fn spectral_norm_power_at(
    lin: &Linearization<'_>,
    opts: PowerOptions,
) -> Result<SpectralEstimate, NormError> {
    let m = lin.input().len();
    let iters = opts.iters.max(1);
    for restart in 0..=MAX_RESTARTS {
        let seed = if restart == 0 {
            opts.seed
        } else {
            derive_seed(opts.seed, restart as u64)
        };
        let mut v = gaussian_vec(&mut rng_from_seed(seed), m);
        let n = norm2(&v);
        v.iter_mut().for_each(|x| *x /= n);

        let mut history = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        let mut stalled = false;
        for it in 0..iters {
            let jv = lin.jvp(&v)?;
            let sigma = norm2(&jv);
            history.push(sigma);
            if it == 0 && sigma < STALL_THRESHOLD {
                stalled = true;
                break;
            }
            if (sigma - prev).abs() < opts.tol || it + 1 == iters {
                return Ok(SpectralEstimate {
                    sigma,
                    v_max: v,
                    iterations: it + 1,
                    restarts: restart,
                    history,
                });
            }
            prev = sigma;
            let w = lin.vjp(&jv)?;
            let wn = norm2(&w);
            if wn == 0.0 {
                stalled = true;
                break;
            }
            v = w.into_iter().map(|x| x / wn).collect();
        }
        if !stalled {
            break;
        }
    }
    Err(NormError::DegenerateJacobian { sigma: 0.0 })
}

/// Estimate of the second singular value by power iteration on `JᵀJ − σ² v vᵀ`.
///
/// The Rayleigh quotient of the deflated operator never exceeds `σ₂`, so the
/// returned value is a lower bound that tightens with more iterations.
pub fn second_singular_estimate(
    lin: &Linearization<'_>,
    top: &SpectralEstimate,
    opts: PowerOptions,
) -> Result<f64, NormError> {
    let m = lin.input().len();
    if m < 2 {
        return Ok(0.0);
    }
    let lambda = top.sigma * top.sigma;
    let orth = |w: &mut Vec<f64>| {
        let c = dot(w, &top.v_max);
        w.iter_mut().zip(&top.v_max).for_each(|(a, b)| *a -= c * b);
    };
    let mut v = gaussian_vec(&mut rng_from_seed(derive_seed(opts.seed, u64::MAX)), m);
    orth(&mut v);
    let n = norm2(&v);
    if n == 0.0 {
        return Ok(0.0);
    }
    v.iter_mut().for_each(|x| *x /= n);
    let mut prev = f64::NEG_INFINITY;
    let mut sigma2 = 0.0;
    for _ in 0..opts.iters.max(1) {
        let jv = lin.jvp(&v)?;
        sigma2 = norm2(&jv);
        if (sigma2 - prev).abs() < opts.tol {
            break;
        }
        prev = sigma2;
        let mut w = lin.vjp(&jv)?;
        let c = dot(&top.v_max, &v);
        w.iter_mut()
            .zip(&top.v_max)
            .for_each(|(a, b)| *a -= lambda * c * b);
        orth(&mut w);
        let wn = norm2(&w);
        if wn == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / wn).collect();
    }
    Ok(sigma2)
}

/// `‖J_f(x) e_k‖₂` for every input coordinate `k`.
pub fn col_norms(model: &Model, x: &[f64]) -> Result<Vec<f64>, NormError> {
    let lin = model.linearize(x)?;
    col_norms_at(&lin)
}

pub fn col_norms_at(lin: &Linearization<'_>) -> Result<Vec<f64>, NormError> {
    let m = lin.input().len();
    (0..m).map(|k| Ok(norm2(&lin.jvp(&unit(m, k))?))).collect()
}

/// Greedy ±1 assignment approximately maximizing `‖Σ_z ρ_z J_z‖₂`.
///
/// Columns are visited in descending ℓ2 norm (stable for equal norms); the
/// first gets `+1` and each later one takes the sign of its inner product
/// with the running sum, `sign(0) = +1`. The result is in the caller's order.
pub fn greedy_sign_vector(columns: &[Vec<f64>]) -> Result<Vec<f64>, NormError> {
    if columns.is_empty() {
        return Err(NormError::EmptyColumns);
    }
    let norms: Vec<f64> = columns.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..columns.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let mut rho = vec![0.0; columns.len()];
    let mut running = vec![0.0; columns[order[0]].len()];
    for (step, &idx) in order.iter().enumerate() {
        let s = if step == 0 {
            1.0
        } else {
            sign(dot(&running, &columns[idx]))
        };
        rho[idx] = s;
        running
            .iter_mut()
            .zip(&columns[idx])
            .for_each(|(r, c)| *r += s * c);
    }
    Ok(rho)
}

/// `‖Σ_z ρ_z J_z‖₂²`.
pub fn signed_sum_sq(columns: &[Vec<f64>], rho: &[f64]) -> f64 {
    let k = columns.first().map_or(0, Vec::len);
    let mut sum = vec![0.0; k];
    for (c, &r) in columns.iter().zip(rho) {
        sum.iter_mut().zip(c).for_each(|(s, v)| *s += r * v);
    }
    dot(&sum, &sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    #[test]
    fn norms_of_small_vectors() {
        assert_eq!(lp_norm(&[3.0, 4.0], Exponent::TWO), 5.0);
        assert_eq!(lp_norm(&[3.0, -4.0], Exponent::INF), 4.0);
        assert_eq!(lp_norm(&[1.0, 1.0, 1.0], Exponent::ONE), 3.0);
        assert!((lp_norm(&[1.0, 1.0], p(3.0)) - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn exponent_domain() {
        assert!(Exponent::new(0.5).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
        assert_eq!("inf".parse::<Exponent>().unwrap(), Exponent::INF);
        assert_eq!("3/2".parse::<Exponent>().unwrap(), p(1.5));
        assert_eq!("2".parse::<Exponent>().unwrap(), Exponent::TWO);
        assert!("1/2".parse::<Exponent>().is_err());
        assert!("abc".parse::<Exponent>().is_err());
    }

    #[test]
    fn dual_exponents() {
        assert_eq!(dual_exponent(Exponent::TWO), Exponent::TWO);
        assert_eq!(dual_exponent(Exponent::INF), Exponent::ONE);
        assert_eq!(dual_exponent(Exponent::ONE), Exponent::INF);
        assert!((dual_exponent(p(4.0)).value() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sign_attack_for_linf() {
        assert_eq!(
            dual_maximizer(&[2.0, -3.0], Exponent::INF, 0.1).unwrap(),
            vec![-0.1, 0.1]
        );
    }

    #[test]
    fn scaled_negative_gradient_for_l2() {
        let eta = dual_maximizer(&[3.0, 4.0], Exponent::TWO, 1.0).unwrap();
        assert!((eta[0] + 0.6).abs() < 1e-15 && (eta[1] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn l1_hits_largest_coordinate_lowest_index() {
        assert_eq!(
            dual_maximizer(&[1.0, -3.0, 3.0], Exponent::ONE, 0.5).unwrap(),
            vec![0.0, 0.5, 0.0]
        );
    }

    #[test]
    fn zero_gradient_is_rejected() {
        assert!(matches!(
            dual_maximizer(&[0.0, 0.0], Exponent::TWO, 1.0),
            Err(NormError::ZeroGradient)
        ));
    }

    #[test]
    fn l2_random_search_never_beats_closed_form() {
        let mut rng = rng_from_seed(3);
        let g = gaussian_vec(&mut rng, 6);
        let eta = dual_maximizer(&g, Exponent::TWO, 0.5).unwrap();
        let best = dot(&eta, &g);
        for _ in 0..100_000 {
            let d = gaussian_vec(&mut rng, 6);
            let n = norm2(&d);
            let cand: Vec<f64> = d.iter().map(|x| 0.5 * x / n).collect();
            assert!(dot(&cand, &g) >= best - 1e-12);
        }
    }

    proptest! {
        #[test]
        fn dual_pairing(g in prop::collection::vec(-10.0f64..10.0, 1..12),
                        pv in prop::sample::select(vec![1.5, 2.0, 3.0, f64::INFINITY]),
                        eps in 0.01f64..5.0) {
            prop_assume!(g.iter().any(|x| x.abs() > 1e-6));
            let p = Exponent::new(pv).unwrap();
            let eta = dual_maximizer(&g, p, eps).unwrap();
            prop_assert!((lp_norm(&eta, p) - eps).abs() <= 1e-9 * eps.max(1.0));
            let target = -eps * lp_norm(&g, p.dual());
            prop_assert!((dot(&eta, &g) - target).abs() <= 1e-9 * target.abs());
        }

        #[test]
        fn dual_maximizer_scale_equivariant(g in prop::collection::vec(-10.0f64..10.0, 1..12),
                                            c in 1e-3f64..1e3,
                                            pv in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0, f64::INFINITY])) {
            prop_assume!(g.iter().any(|x| x.abs() > 1e-6));
            let p = Exponent::new(pv).unwrap();
            let a = dual_maximizer(&g, p, 0.7).unwrap();
            let scaled: Vec<f64> = g.iter().map(|x| c * x).collect();
            let b = dual_maximizer(&scaled, p, 0.7).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn greedy_lower_bound(cols in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..10)) {
            let rho = greedy_sign_vector(&cols).unwrap();
            let value = signed_sum_sq(&cols, &rho);
            let floor: f64 = cols.iter().map(|c| dot(c, c)).sum();
            prop_assert!(value >= floor - 1e-9 * floor.max(1.0));
        }
    }

    #[test]
    fn projection_only_shrinks() {
        let mut v = vec![3.0, 4.0];
        project_to_ball(&mut v, Exponent::TWO, 1.0);
        assert!(lp_norm(&v, Exponent::TWO) <= 1.0);
        let mut w = vec![0.1, 0.1];
        project_to_ball(&mut w, Exponent::TWO, 1.0);
        assert_eq!(w, vec![0.1, 0.1]);
    }

    #[test]
    fn power_iteration_diagonal() {
        let m = Model::linear(&[vec![3.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let est = spectral_norm_power(&m, &[0.0, 0.0], PowerOptions::default()).unwrap();
        assert!((est.sigma - 3.0).abs() < 1e-9);
        assert!((est.v_max[0].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn power_iteration_identity() {
        let est =
            spectral_norm_power(&Model::identity(4), &[0.0; 4], PowerOptions::default()).unwrap();
        assert!((est.sigma - 1.0).abs() < 1e-12);
        assert!((norm2(&est.v_max) - 1.0).abs() < 1e-12);
        assert_eq!(est.iterations, 2);
    }

    #[test]
    fn power_iteration_is_monotone() {
        let mut rng = rng_from_seed(5);
        let m = Model::init_mlp(
            &[6, 10, 4],
            Activation::Tanh,
            Activation::Identity,
            &mut rng,
        )
        .unwrap();
        let x = gaussian_vec(&mut rng, 6);
        let est = spectral_norm_power(&m, &x, PowerOptions::default()).unwrap();
        for w in est.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_jacobian_is_degenerate() {
        let m = Model::linear(&[vec![0.0, 0.0]], vec![1.0]).unwrap();
        assert!(matches!(
            spectral_norm_power(&m, &[1.0, 2.0], PowerOptions::default()),
            Err(NormError::DegenerateJacobian { .. })
        ));
    }

    #[test]
    fn second_estimate_detects_multiplicity() {
        let id = Model::identity(3);
        let lin = id.linearize(&[0.0; 3]).unwrap();
        let top = spectral_norm_power_at(&lin, PowerOptions::default()).unwrap();
        assert!(
            (second_singular_estimate(&lin, &top, PowerOptions::default()).unwrap() - 1.0).abs()
                < 1e-12
        );
        let d = Model::linear(&[vec![3.0, 0.0], vec![0.0, 1.0]], vec![0.0; 2]).unwrap();
        let lin = d.linearize(&[0.0; 2]).unwrap();
        let top = spectral_norm_power_at(&lin, PowerOptions::default()).unwrap();
        let s2 = second_singular_estimate(&lin, &top, PowerOptions::default()).unwrap();
        assert!((s2 - 1.0).abs() < 1e-6, "{s2}");
    }

    #[test]
    fn column_norms() {
        let m = Model::linear(&[vec![1.0, 0.0], vec![0.0, -2.0]], vec![0.0; 2]).unwrap();
        assert_eq!(col_norms(&m, &[0.5, 0.5]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(
            col_norms(&Model::identity(3), &[0.0; 3]).unwrap(),
            vec![1.0; 3]
        );
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(
            greedy_sign_vector(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            vec![1.0, 1.0]
        );
        let opposing = vec![vec![2.0, 0.0], vec![-1.0, 0.0]];
        let rho = greedy_sign_vector(&opposing).unwrap();
        assert_eq!(rho, vec![1.0, -1.0]);
        assert_eq!(signed_sum_sq(&opposing, &rho).sqrt(), 3.0);
        // Largest column is visited first even when it is not first in caller order.
        assert_eq!(
            greedy_sign_vector(&[vec![-1.0, 0.0], vec![2.0, 0.0]]).unwrap(),
            vec![-1.0, 1.0]
        );
        assert!(matches!(
            greedy_sign_vector(&[]),
            Err(NormError::EmptyColumns)
        ));
    }
}
