//! Robustness and degradation measures over datasets.

use serde::Serialize;
use thiserror::Error;

use crate::classify::{deepfool_style, feasibility_bound, ClassifyAttack, LossKind, MarginContext};
use crate::data::Dataset;
use crate::model::{Model, ModelError};
use crate::norms::{lp_norm, Exponent};
use crate::report::AttackError;
use crate::tensor::{argmax, compensated_sum};

/// Iteration cap used by [`rho1`] when none is given.
pub const DEFAULT_DEEPFOOL_ITERS: usize = 50;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dataset has no labels")]
    NoLabels,
    #[error("no example is classified correctly, the ratio is undefined")]
    NoCorrect,
    #[error("every example was excluded ({excluded} excluded)")]
    EmptyEffectiveSet { excluded: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("peak must be positive, got {0}")]
    InvalidPeak(f64),
    #[error("example {index}: {source}")]
    Attack {
        index: usize,
        #[source]
        source: AttackError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoolingRatio {
    pub ratio: f64,
    pub fooled: usize,
    /// Correctly classified examples, the denominator.
    pub correct: usize,
}

/// Dataset mean of a per-example quantity, with the count of examples left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessMeasure {
    pub value: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Indices and labels of the correctly classified examples.
pub fn correctly_classified(model: &Model, dataset: &Dataset) -> Result<Vec<(usize, usize)>> {
    if !dataset.has_labels() {
        return Err(MetricsError::NoLabels);
    }
    let mut out = Vec::new();
    for (i, e) in dataset.examples.iter().enumerate() {
        let label = e.label.expect("checked above");
        if argmax(&model.forward(&e.x)?) == label {
            out.push((i, label));
        }
    }
    Ok(out)
}

/// Share of correctly classified examples whose prediction changes under `attack`.
pub fn fooling_ratio(
    model: &Model,
    dataset: &Dataset,
    attack: &ClassifyAttack,
) -> Result<FoolingRatio> {
    let correct = correctly_classified(model, dataset)?;
    if correct.is_empty() {
        return Err(MetricsError::NoCorrect);
    }
    let mut fooled = 0;
    for &(index, label) in &correct {
        let r = attack
            .run(model, &dataset.examples[index].x, Some(label), index as u64)
            .map_err(|source| MetricsError::Attack { index, source })?;
        if r.predicted_class_after.is_some_and(|p| p != label) {
            fooled += 1;
        }
    }
    Ok(FoolingRatio {
        ratio: fooled as f64 / correct.len() as f64,
        fooled,
        correct: correct.len(),
    })
}

fn mean(values: Vec<f64>, excluded: usize) -> Result<RobustnessMeasure> {
    if values.is_empty() {
        return Err(MetricsError::EmptyEffectiveSet { excluded });
    }
    let used = values.len();
    Ok(RobustnessMeasure {
        value: compensated_sum(values) / used as f64,
        used,
        excluded,
    })
}

/// DeepFool-style perturbation norms `‖r̂(x)‖_p` over the correctly classified
/// examples; `None` marks an example where the attack did not reach the boundary.
pub fn deepfool_norms(
    model: &Model,
    dataset: &Dataset,
    p: Exponent,
    max_iter: usize,
) -> Result<Vec<(usize, Option<f64>)>> {
    let correct = correctly_classified(model, dataset)?;
    let mut out = Vec::with_capacity(correct.len());
    for &(index, label) in &correct {
        let ctx =
            MarginContext::with_label(model, &dataset.examples[index].x, label, LossKind::Margin)
                .map_err(|source| MetricsError::Attack { index, source })?;
        let r = deepfool_style(&ctx, p, max_iter)
            .map_err(|source| MetricsError::Attack { index, source })?;
        out.push((index, r.success.then(|| r.norm(p))));
    }
    Ok(out)
}

/// Mean of `‖r̂(x)‖_p / ‖x‖_p` with `r̂` from the DeepFool-style attack.
///
/// Only correctly classified examples count. Examples where the attack does
/// not reach the boundary, or with `x = 0`, are excluded and counted.
pub fn rho1(
    model: &Model,
    dataset: &Dataset,
    p: Exponent,
    max_iter: usize,
) -> Result<RobustnessMeasure> {
    rho1_from_norms(dataset, p, &deepfool_norms(model, dataset, p, max_iter)?)
}

/// [`rho1`] from precomputed [`deepfool_norms`].
pub fn rho1_from_norms(
    dataset: &Dataset,
    p: Exponent,
    norms: &[(usize, Option<f64>)],
) -> Result<RobustnessMeasure> {
    let mut values = Vec::with_capacity(norms.len());
    let mut excluded = 0;
    for &(index, norm) in norms {
        let xn = lp_norm(&dataset.examples[index].x, p);
        match norm {
            Some(r) if xn > 0.0 => values.push(r / xn),
            _ => excluded += 1,
        }
    }
    mean(values, excluded)
}

/// Smallest budget in `grid` at which more than `threshold` of the examples
/// are fooled by a perturbation of at most that norm.
///
/// `norms` are per-example minimal perturbation norms as returned by
/// [`deepfool_norms`]; failures never count as fooled.
pub fn min_eps_fooling(
    norms: &[(usize, Option<f64>)],
    grid: &[f64],
    threshold: f64,
) -> Option<f64> {
    if norms.is_empty() {
        return None;
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.into_iter().find(|&eps| {
        let fooled = norms
            .iter()
            .filter(|(_, n)| n.is_some_and(|n| n <= eps))
            .count();
        fooled as f64 / norms.len() as f64 > threshold
    })
}

/// Per-example [`feasibility_bound`] over the correctly classified examples;
/// `None` marks a vanishing gradient.
pub fn feasibility_bounds(
    model: &Model,
    dataset: &Dataset,
    p: Exponent,
) -> Result<Vec<(usize, Option<f64>)>> {
    let correct = correctly_classified(model, dataset)?;
    let mut out = Vec::with_capacity(correct.len());
    for &(index, label) in &correct {
        let ctx =
            MarginContext::with_label(model, &dataset.examples[index].x, label, LossKind::Margin)
                .map_err(|source| MetricsError::Attack { index, source })?;
        match feasibility_bound(&ctx, p) {
            Ok(b) => out.push((index, Some(b))),
            Err(AttackError::ZeroGradient { .. }) => out.push((index, None)),
            Err(source) => return Err(MetricsError::Attack { index, source }),
        }
    }
    Ok(out)
}

/// Mean of `L(x, 0) / ‖∇L(x, 0)‖_q` over the correctly classified examples.
pub fn rho2(model: &Model, dataset: &Dataset, p: Exponent) -> Result<RobustnessMeasure> {
    let bounds = feasibility_bounds(model, dataset, p)?;
    let excluded = bounds.iter().filter(|(_, b)| b.is_none()).count();
    mean(
        bounds.into_iter().filter_map(|(_, b)| b).collect(),
        excluded,
    )
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y))) / a.len() as f64)
}

/// `10 log10(peak² / mse)` in dB; identical inputs give `f64::INFINITY`.
pub fn psnr(a: &[f64], b: &[f64], peak: f64) -> Result<f64> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(MetricsError::InvalidPeak(peak));
    }
    let m = mse(a, b)?;
    Ok(psnr_from_mse(m, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use proptest::prelude::*;

    fn binary(w: [f64; 2], b: f64) -> Model {
        // Scores (w·x + b, 0): class 0 iff w·x + b > 0.
        Model::linear(&[w.to_vec(), vec![0.0, 0.0]], vec![b, 0.0]).unwrap()
    }

    #[test]
    fn min_eps_needs_a_strict_majority_above_threshold() {
        let norms = [(0, Some(0.1)), (1, Some(0.3)), (2, None), (3, Some(0.2))];
        assert_eq!(min_eps_fooling(&norms, &[0.5, 0.05, 0.25], 0.5), Some(0.5));
        assert_eq!(min_eps_fooling(&norms, &[0.5, 0.05, 0.25], 0.4), Some(0.25));
        assert_eq!(min_eps_fooling(&norms, &[0.05, 0.25, 0.5], 0.99), None);
        assert_eq!(min_eps_fooling(&norms[..1], &[0.1], 0.99), Some(0.1));
        assert_eq!(min_eps_fooling(&[], &[0.1], 0.5), None);
    }

    #[test]
    fn psnr_arithmetic() {
        assert_eq!(psnr(&[0.5, 0.5], &[0.5, 0.5], 1.0).unwrap(), f64::INFINITY);
        assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() < 1e-12);
        let gain = psnr_from_mse(0.005, 1.0) - psnr_from_mse(0.01, 1.0);
        assert!((gain - 10.0 * 2f64.log10()).abs() < 1e-12);
        assert!(psnr(&[1.0], &[0.0], 0.0).is_err());
        assert!(mse(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_budget_fools_nobody() {
        let m = binary([1.0, -1.0], 0.0);
        let d = Dataset::new(vec![
            Example::labelled(vec![1.0, 0.0], 0),
            Example::labelled(vec![0.0, 1.0], 1),
        ]);
        let attack = ClassifyAttack::Gnm {
            p: Exponent::INF,
            eps: 0.0,
            loss: LossKind::Margin,
        };
        let r = fooling_ratio(&m, &d, &attack).unwrap();
        assert_eq!((r.ratio, r.fooled, r.correct), (0.0, 0, 2));
    }

    #[test]
    fn budget_above_every_bound_fools_everybody() {
        let m = binary([1.0, -0.5], 0.1);
        let d = crate::data::blobs(30, 2, 2, 2.0, 0.6, 4);
        let bounds = feasibility_bounds(&m, &d, Exponent::TWO).unwrap();
        let max = bounds.iter().filter_map(|(_, b)| *b).fold(0.0, f64::max);
        let attack = ClassifyAttack::Gnm {
            p: Exponent::TWO,
            eps: max * 1.01,
            loss: LossKind::Margin,
        };
        assert_eq!(fooling_ratio(&m, &d, &attack).unwrap().ratio, 1.0);
    }

    #[test]
    fn no_correct_examples_is_an_error() {
        let m = binary([1.0, 0.0], 0.0);
        let d = Dataset::new(vec![Example::labelled(vec![1.0, 0.0], 1)]);
        let attack = ClassifyAttack::Gnm {
            p: Exponent::INF,
            eps: 0.1,
            loss: LossKind::Margin,
        };
        assert!(matches!(
            fooling_ratio(&m, &d, &attack),
            Err(MetricsError::NoCorrect)
        ));
        assert!(matches!(
            rho2(&m, &d, Exponent::INF),
            Err(MetricsError::EmptyEffectiveSet { excluded: 0 })
        ));
    }

    #[test]
    fn linear_binary_closed_forms() {
        let w = [2.0, -1.0];
        let m = binary(w, 0.0);
        let xs = [
            vec![1.0, 0.5],
            vec![0.5, -1.0],
            vec![-1.0, 0.5],
            vec![0.2, 2.0],
        ];
        let d = Dataset::new(
            xs.iter()
                .map(|x| {
                    let s = w[0] * x[0] + w[1] * x[1];
                    Example::labelled(x.clone(), if s > 0.0 { 0 } else { 1 })
                })
                .collect(),
        );
        for p in [Exponent::TWO, Exponent::INF] {
            let wq = lp_norm(&w, p.dual());
            let dist: Vec<f64> = xs
                .iter()
                .map(|x| (w[0] * x[0] + w[1] * x[1]).abs() / wq)
                .collect();
            let r2 = rho2(&m, &d, p).unwrap();
            assert!((r2.value - dist.iter().sum::<f64>() / 4.0).abs() < 1e-12);
            let r1 = rho1(&m, &d, p, DEFAULT_DEEPFOOL_ITERS).unwrap();
            let expected: f64 = xs
                .iter()
                .zip(&dist)
                .map(|(x, d)| d / lp_norm(x, p))
                .sum::<f64>()
                / 4.0;
            assert!(
                (r1.value - expected).abs() < 1e-5 * expected,
                "{} vs {expected}",
                r1.value
            );
            assert_eq!(r1.excluded, 0);
        }
    }

    #[test]
    fn boundary_example_has_zero_measures() {
        let m = binary([1.0, -1.0], 0.0);
        let d = Dataset::new(vec![Example::labelled(vec![0.5, 0.5], 0)]);
        assert_eq!(rho2(&m, &d, Exponent::TWO).unwrap().value, 0.0);
        assert_eq!(rho1(&m, &d, Exponent::TWO, 50).unwrap().value, 0.0);
    }

    #[test]
    fn rho2_ignores_score_scaling() {
        let d = crate::data::blobs(20, 2, 2, 2.0, 0.5, 1);
        let a = binary([1.0, 0.3], 0.2);
        let b = binary([3.0, 0.9], 0.6);
        let (ra, rb) = (
            rho2(&a, &d, Exponent::INF).unwrap(),
            rho2(&b, &d, Exponent::INF).unwrap(),
        );
        assert!((ra.value - rb.value).abs() < 1e-14);
    }

    #[test]
    fn doubling_inputs_halves_rho1() {
        // Scores w·x with no bias: scaling x by 2 doubles the distance, and
        // halving w keeps the distance while doubling ‖x‖.
        let d1 = Dataset::new(vec![Example::labelled(vec![1.0, 0.5], 0)]);
        let d2 = Dataset::new(vec![Example::labelled(vec![2.0, 1.0], 0)]);
        let m1 = binary([2.0, -1.0], 0.0);
        let m2 = binary([2.0, -1.0], -1.5);
        let r1 = rho1(&m1, &d1, Exponent::TWO, 50).unwrap().value;
        let r2 = rho1(&m2, &d2, Exponent::TWO, 50).unwrap().value;
        assert!((r2 - r1 / 2.0).abs() < 1e-6 * r1);
    }

    proptest! {
        #[test]
        fn psnr_decreases_with_mse(a in 1e-6f64..1.0, f in 1.001f64..10.0) {
            prop_assert!(psnr_from_mse(a * f, 1.0) < psnr_from_mse(a, 1.0));
        }

        #[test]
        fn psnr_ignores_joint_permutation(v in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..20), rot in 0usize..20) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.iter().copied().unzip();
            let k = rot % a.len();
            let (mut ar, mut br) = (a.clone(), b.clone());
            ar.rotate_left(k);
            br.rotate_left(k);
            let (x, y) = (psnr(&a, &b, 1.0).unwrap(), psnr(&ar, &br, 1.0).unwrap());
            prop_assert!(x == y || (x - y).abs() < 1e-12);
        }
    }
}
