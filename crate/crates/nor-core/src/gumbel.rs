//! Binary Gumbel-softmax relaxation with externally supplied noise.

use rand::Rng;

use crate::tape::stable_sigmoid;

/// A pair of standard Gumbel draws, one per class of the binary variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelPair {
    pub g1: f64,
    pub g0: f64,
}

impl GumbelPair {
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        GumbelPair {
            g1: standard_gumbel(rng),
            g0: standard_gumbel(rng),
        }
    }

    /// The logistic-distributed difference that enters the relaxation.
    pub fn delta(self) -> f64 {
        self.g1 - self.g0
    }
}

/// `-ln(-ln u)` with `u` clamped away from 0 and 1.
pub fn standard_gumbel<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(1e-300, 1.0 - 1e-16);
    -(-u.ln()).ln()
}

/// Relaxed binary sample `z = sigmoid((logit q + g1 - g0) / tau)`.
///
/// Probabilities exactly at 0 or 1 are clamped into `[1e-7, 1 - 1e-7]`
/// before the logit.
pub fn gumbel_softmax_sample(q: f64, tau: f64, noise: GumbelPair) -> f64 {
    assert!(tau > 0.0, "temperature must be positive");
    let q = q.clamp(1e-7, 1.0 - 1e-7);
    let logit = q.ln() - (1.0 - q).ln();
    stable_sigmoid((logit + noise.delta()) / tau)
}
