//! Seeding and random sampling helpers.
//!
//! All randomness flows through [`ChaCha8Rng`] seeded from a `u64`, so a run
//! is reproducible from its seed alone. Per-example streams are derived with
//! [`derive_seed`] so that serial and parallel drivers draw identical values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::norms::Exponent;

pub type AttackRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> AttackRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `seed` and `index` into an independent stream seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Draws a point uniformly from the ℓp ball of the given radius.
///
/// Finite `p` uses the generalized-Gaussian construction: coordinates with
/// density ∝ exp(-|t|^p) divided by `(Σ|y_i|^p + W)^{1/p}` with `W ~ Exp(1)`.
pub fn sample_lp_ball<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    p: Exponent,
    radius: f64,
) -> Vec<f64> {
    if radius == 0.0 || dim == 0 {
        return vec![0.0; dim];
    }
    if p.is_infinite() {
        return uniform_vec(rng, dim, -radius, radius);
    }
    let p = p.value();
    let gamma = Gamma::new(1.0 / p, 1.0).expect("shape 1/p is positive");
    let mut y: Vec<f64> = (0..dim)
        .map(|_| {
            let magnitude: f64 = gamma.sample(rng);
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            s * magnitude.powf(1.0 / p)
        })
        .collect();
    let w: f64 = Exp1.sample(rng);
    let denom = (y.iter().map(|v| v.abs().powf(p)).sum::<f64>() + w).powf(1.0 / p);
    for v in &mut y {
        *v *= radius / denom;
    }
    y
}
