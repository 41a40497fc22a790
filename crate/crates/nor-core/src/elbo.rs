//! Analytic pieces of the ELBO under a factorized Bernoulli posterior.

use ndarray::Array1;

use crate::error::{NorError, Result};
use crate::model::{ModelParams, PosteriorFactors};

/// Exact expectation of the negative-observation log-likelihoods:
/// `sum_{i: x_i=0} E_q[ln p(x_i=0|z)] = -sum_{i: x_i=0} (theta_i0 + sum_k theta_ik q_k)`.
///
/// The expectation is exact because `-a_i` is linear in `z`.
pub fn expected_negative_term(
    params: &ModelParams,
    x: &[u8],
    q: &PosteriorFactors,
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
    let mut total = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0 {
            let mut a = params.theta0[i];
            for (t, qk) in params.theta.row(i).iter().zip(q.q.iter()) {
                a += t * qk;
            }
            total -= a;
        }
    }
    Ok(total)
}

fn bernoulli_kl(q: f64, mu: f64) -> f64 {
    // 0 ln 0 := 0 at the endpoints.
    let mut kl = 0.0;
    if q > 0.0 {
        kl += q * (q.ln() - mu.ln());
    }
    if q < 1.0 {
        kl += (1.0 - q) * ((1.0 - q).ln() - (1.0 - mu).ln());
    }
    kl.max(0.0)
}

/// `KL(q || p(z)) = sum_k KL(Bern(q_k) || Bern(mu_k))`, non-negative.
pub fn kl_to_prior(q: &PosteriorFactors, mu: &Array1<f64>) -> Result<f64> {
    if q.k() != mu.len() {
        return Err(NorError::DimMismatch(format!(
            "posterior has K={}, prior has K={}",
            q.k(),
            mu.len()
        )));
    }
    Ok(q.q.iter().zip(mu.iter()).map(|(&qk, &mk)| bernoulli_kl(qk, mk)).sum())
}
