//! Shared brute-force oracles for integration tests. These are independent
//! straight-line reimplementations: they enumerate configurations and apply
//! textbook formulas directly, without touching the library's closed forms.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use nor_core::model::{ModelParams, PosteriorFactors};
use rand::Rng;

/// f(s) = ln(1 - e^{-s}) evaluated naively (fine for oracle-scale inputs).
pub fn f_naive(s: f64) -> f64 {
    (1.0 - (-s).exp()).ln()
}

/// g(t) = -t ln t + (t+1) ln(t+1).
pub fn g_naive(t: f64) -> f64 {
    -t * t.ln() + (t + 1.0) * (t + 1.0).ln()
}

pub fn activation_naive(params: &ModelParams, i: usize, z_bits: usize) -> f64 {
    let mut a = params.theta0[i];
    for kk in 0..params.k() {
        if z_bits >> kk & 1 == 1 {
            a += params.theta[(i, kk)];
        }
    }
    a
}

pub fn prior_prob(params: &ModelParams, z_bits: usize) -> f64 {
    let mut p = 1.0;
    for (kk, &m) in params.mu.iter().enumerate() {
        p *= if z_bits >> kk & 1 == 1 { m } else { 1.0 - m };
    }
    p
}

pub fn factorized_prob(q: &PosteriorFactors, z_bits: usize) -> f64 {
    let mut p = 1.0;
    for (kk, &qk) in q.q.iter().enumerate() {
        p *= if z_bits >> kk & 1 == 1 { qk } else { 1.0 - qk };
    }
    p
}

/// Enumerated normalizer and marginals of the upper-bound surrogate joint:
/// positive likelihoods replaced by exp(psi a - g(psi)), negatives exact.
pub fn surrogate_ub_enumeration(
    params: &ModelParams,
    x: &[u8],
    psi: &[f64],
) -> (f64, Vec<f64>) {
    let k = params.k();
    let n_cfg = 1usize << k;
    let mut weights = Vec::with_capacity(n_cfg);
    for cfg in 0..n_cfg {
        let mut w = prior_prob(params, cfg);
        let mut pi = 0;
        for (i, &xi) in x.iter().enumerate() {
            let a = activation_naive(params, i, cfg);
            if xi == 1 {
                w *= (psi[pi] * a - g_naive(psi[pi])).exp();
                pi += 1;
            } else {
                w *= (-a).exp();
            }
        }
        weights.push(w);
    }
    let z: f64 = weights.iter().sum();
    let mut marginals = vec![0.0; k];
    for (cfg, &w) in weights.iter().enumerate() {
        for (kk, m) in marginals.iter_mut().enumerate() {
            if cfg >> kk & 1 == 1 {
                *m += w / z;
            }
        }
    }
    (z.ln(), marginals)
}

/// Enumerated marginals of the lower-bound surrogate joint: each positive
/// likelihood replaced by exp(sum_k lambda_k f(theta0 + theta_k z_k / lambda_k)).
pub fn surrogate_lb_enumeration(
    params: &ModelParams,
    x: &[u8],
    lambda: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    let k = params.k();
    let n_cfg = 1usize << k;
    let mut weights = Vec::with_capacity(n_cfg);
    for cfg in 0..n_cfg {
        let mut logw = prior_prob(params, cfg).ln();
        let mut pi = 0;
        for (i, &xi) in x.iter().enumerate() {
            let a = activation_naive(params, i, cfg);
            if xi == 1 {
                let t0 = params.theta0[i];
                let mut bound = 0.0;
                for kk in 0..k {
                    let lam = lambda[pi][kk];
                    if lam <= 0.0 {
                        continue;
                    }
                    let zk = if cfg >> kk & 1 == 1 { 1.0 } else { 0.0 };
                    bound += lam * f_naive(t0 + params.theta[(i, kk)] * zk / lam);
                }
                logw += bound;
                pi += 1;
            } else {
                logw += -a;
            }
        }
        weights.push(logw.exp());
    }
    let z: f64 = weights.iter().sum();
    let mut marginals = vec![0.0; k];
    for (cfg, &w) in weights.iter().enumerate() {
        for (kk, m) in marginals.iter_mut().enumerate() {
            if cfg >> kk & 1 == 1 {
                *m += w / z;
            }
        }
    }
    (z.ln(), marginals)
}

/// Brute-force E_q[sum_{i : x_i = 0} ln p(x_i = 0 | z)].
pub fn negative_term_enumeration(params: &ModelParams, x: &[u8], q: &PosteriorFactors) -> f64 {
    let n_cfg = 1usize << params.k();
    let mut total = 0.0;
    for cfg in 0..n_cfg {
        let p = factorized_prob(q, cfg);
        if p == 0.0 {
            continue;
        }
        let mut ll = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0 {
                ll -= activation_naive(params, i, cfg);
            }
        }
        total += p * ll;
    }
    total
}

/// Brute-force KL(q || prior) summed over all configurations.
pub fn kl_enumeration(q: &PosteriorFactors, mu: &Array1<f64>) -> f64 {
    let k = q.k();
    let n_cfg = 1usize << k;
    let mut total = 0.0;
    for cfg in 0..n_cfg {
        let pq = factorized_prob(q, cfg);
        if pq == 0.0 {
            continue;
        }
        let mut pp = 1.0;
        for (kk, &m) in mu.iter().enumerate() {
            pp *= if cfg >> kk & 1 == 1 { m } else { 1.0 - m };
        }
        total += pq * (pq.ln() - pp.ln());
    }
    total
}

/// A random dense-ish instance for oracle comparisons.
pub fn random_instance<R: Rng>(rng: &mut R, d: usize, k: usize) -> ModelParams {
    let theta = Array2::from_shape_fn((d, k), |_| {
        if rng.random::<f64>() < 0.3 {
            0.0
        } else {
            rng.random_range(0.05..2.0)
        }
    });
    let theta0 = Array1::from_shape_fn(d, |_| rng.random_range(0.01..1.0));
    let mu = Array1::from_shape_fn(k, |_| rng.random_range(0.05..0.95));
    ModelParams::new(theta, theta0, mu).expect("valid random instance")
}

pub fn random_observation<R: Rng>(rng: &mut R, d: usize) -> Vec<u8> {
    (0..d).map(|_| u8::from(rng.random::<f64>() < 0.4)).collect()
}

pub fn random_posterior<R: Rng>(rng: &mut R, k: usize) -> PosteriorFactors {
    PosteriorFactors::new(Array1::from_shape_fn(k, |_| rng.random_range(0.01..0.99)))
        .expect("valid posterior")
}

/// Symmetric-Dirichlet sample on the K-simplex.
pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|&e| e / total).collect()
}
