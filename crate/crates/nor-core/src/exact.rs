//! Exact small-scale oracles by enumeration over all 2^K latent
//! configurations, plus the Monte Carlo ELBO estimator used at test time.
//!
//! Enumeration runs in log space with max-subtracted log-sum-exp and a fixed
//! iteration order, so results are deterministic. All likelihood
//! evaluations share the [`FLOOR_A`](crate::bounds::FLOOR_A) clamp of
//! `log_lik_positive`, which keeps every quantity finite and makes the
//! ELBO-dominance property hold on arbitrary inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{log1m_exp_neg, FLOOR_A};
use crate::elbo::{expected_negative_term, kl_to_prior};
use crate::error::{NorError, Result};
use crate::model::{ModelParams, PosteriorFactors};

/// Enumeration oracles refuse instances wider than this (2^20 ~ 1M
/// configurations keeps them interactive).
pub const K_ENUM_MAX: usize = 20;

fn check_instance(params: &ModelParams, x: &[u8]) -> Result<()> {
    if x.len() != params.d() {
        return Err(NorError::DimMismatch(format!(
            "observation has length {}, expected D={}",
            x.len(),
            params.d()
        )));
    }
    if params.k() > K_ENUM_MAX {
        return Err(NorError::Capacity(format!(
            "enumeration supports K <= {K_ENUM_MAX}, got K={}",
            params.k()
        )));
    }
    Ok(())
}

/// Positive dimensions of an observation, ascending.
pub fn positive_dims(x: &[u8]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter_map(|(i, &xi)| (xi != 0).then_some(i))
        .collect()
}

/// Precomputed per-configuration pieces shared by the enumeration oracles.
struct EnumTables {
    /// ln p(z = config) for every configuration.
    log_prior: Vec<f64>,
    /// sum over negative dims of a_i(config), so the negative log-likelihood
    /// of a configuration is just its negation.
    neg_activation: Vec<f64>,
    /// sum over positive dims of f(clamp(a_i(config))).
    pos_loglik: Vec<f64>,
}

fn enum_tables(params: &ModelParams, x: &[u8]) -> EnumTables {
    let k = params.k();
    let n_cfg = 1usize << k;
    let pos = positive_dims(x);

    let base_prior: f64 = params.mu.iter().map(|&m| (1.0 - m).ln()).sum();
    let delta_prior: Vec<f64> = params
        .mu
        .iter()
        .map(|&m| m.ln() - (1.0 - m).ln())
        .collect();

    // Column sums of theta restricted to the negative dims.
    let mut neg_base = 0.0;
    let mut neg_col = vec![0.0; k];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0 {
            neg_base += params.theta0[i];
            for (kk, t) in params.theta.row(i).iter().enumerate() {
                neg_col[kk] += t;
            }
        }
    }

    let mut log_prior = Vec::with_capacity(n_cfg);
    let mut neg_activation = Vec::with_capacity(n_cfg);
    let mut pos_loglik = Vec::with_capacity(n_cfg);
    for cfg in 0..n_cfg {
        let mut lp = base_prior;
        let mut na = neg_base;
        for kk in 0..k {
            if cfg >> kk & 1 == 1 {
                lp += delta_prior[kk];
                na += neg_col[kk];
            }
        }
        let mut pl = 0.0;
        for &i in &pos {
            let mut a = params.theta0[i];
            let row = params.theta.row(i);
            for kk in 0..k {
                if cfg >> kk & 1 == 1 {
                    a += row[kk];
                }
            }
            pl += log1m_exp_neg(a.max(FLOOR_A));
        }
        log_prior.push(lp);
        neg_activation.push(na);
        pos_loglik.push(pl);
    }
    EnumTables {
        log_prior,
        neg_activation,
        pos_loglik,
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln sum_z p(x|z) p(z)` by full enumeration.
pub fn exact_log_marginal(params: &ModelParams, x: &[u8]) -> Result<f64> {
    check_instance(params, x)?;
    let t = enum_tables(params, x);
    let joint = (0..t.log_prior.len())
        .map(move |c| t.log_prior[c] - t.neg_activation[c] + t.pos_loglik[c]);
    Ok(log_sum_exp(joint))
}

/// The exact posterior over all 2^K configurations together with its K
/// Bernoulli marginals.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// `table[cfg]`, `cfg` read bitwise (bit k = z_k); sums to 1.
    pub table: Vec<f64>,
    pub marginals: PosteriorFactors,
}

pub fn exact_posterior(params: &ModelParams, x: &[u8]) -> Result<ExactPosterior> {
    check_instance(params, x)?;
    let t = enum_tables(params, x);
    let n_cfg = t.log_prior.len();
    let log_joint: Vec<f64> = (0..n_cfg)
        .map(|c| t.log_prior[c] - t.neg_activation[c] + t.pos_loglik[c])
        .collect();
    let lse = log_sum_exp(log_joint.iter().copied());
    let mut table: Vec<f64> = log_joint.iter().map(|&lj| (lj - lse).exp()).collect();
    let total: f64 = table.iter().sum();
    for p in &mut table {
        *p /= total;
    }
    let k = params.k();
    let mut marg = vec![0.0; k];
    for (cfg, &p) in table.iter().enumerate() {
        for (kk, m) in marg.iter_mut().enumerate() {
            if cfg >> kk & 1 == 1 {
                *m += p;
            }
        }
    }
    let marginals = PosteriorFactors::new(marg.iter().map(|m| m.clamp(0.0, 1.0)).collect())?;
    Ok(ExactPosterior { table, marginals })
}

/// Probability of a configuration under a factorized posterior.
fn factorized_prob(q: &PosteriorFactors, cfg: usize) -> f64 {
    q.q.iter()
        .enumerate()
        .map(|(kk, &qk)| if cfg >> kk & 1 == 1 { qk } else { 1.0 - qk })
        .product()
}

/// ELBO with the positive term computed exactly by enumeration:
/// `E_q[sum_{i+} f(a_i)] + E_q[sum_{i0} -a_i] - KL(q || p)`.
pub fn elbo_exact(params: &ModelParams, x: &[u8], q: &PosteriorFactors) -> Result<f64> {
    check_instance(params, x)?;
    if q.k() != params.k() {
        return Err(NorError::DimMismatch(format!(
            "posterior has K={}, params have K={}",
            q.k(),
            params.k()
        )));
    }
    let t = enum_tables(params, x);
    let mut pos = 0.0;
    for (cfg, &pl) in t.pos_loglik.iter().enumerate() {
        let p = factorized_prob(q, cfg);
        if p > 0.0 {
            pos += p * pl;
        }
    }
    Ok(pos + expected_negative_term(params, x, q)? - kl_to_prior(q, &params.mu)?)
}

/// ELBO with the positive term estimated from `n_samples` exact Bernoulli
/// draws from `q`; the negative and KL terms stay analytic. Deterministic
/// for a fixed `rng_seed`.
pub fn elbo_mc_test(
    params: &ModelParams,
    x: &[u8],
    q: &PosteriorFactors,
    n_samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    if x.len() != params.d() {
        return Err(NorError::DimMismatch(format!(
            "observation has length {}, expected D={}",
            x.len(),
            params.d()
        )));
    }
    if q.k() != params.k() {
        return Err(NorError::DimMismatch(format!(
            "posterior has K={}, params have K={}",
            q.k(),
            params.k()
        )));
    }
    let pos_dims = positive_dims(x);
    let k = params.k();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pos_mean = 0.0;
    if !pos_dims.is_empty() && n_samples > 0 {
        let mut z = vec![false; k];
        let mut total = 0.0;
        for _ in 0..n_samples {
            for (kk, zk) in z.iter_mut().enumerate() {
                *zk = rng.random::<f64>() < q.q[kk];
            }
            for &i in &pos_dims {
                let mut a = params.theta0[i];
                let row = params.theta.row(i);
                for (kk, &on) in z.iter().enumerate() {
                    if on {
                        a += row[kk];
                    }
                }
                total += log1m_exp_neg(a.max(FLOOR_A));
            }
        }
        pos_mean = total / n_samples as f64;
    }
    Ok(pos_mean + expected_negative_term(params, x, q)? - kl_to_prior(q, &params.mu)?)
}
