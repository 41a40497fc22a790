//! Likelihood terms of the noisy-OR model and the conjugate bounds on the
//! positive-observation likelihood.
//!
//! The log-likelihood of a positive observation, `f(a) = ln(1 - e^{-a})`
//! with activation `a = theta_i0 + sum_k theta_ik z_k`, is concave in `a`.
//! Its Fenchel conjugate `g(t) = -t ln t + (t+1) ln(t+1)` yields the linear
//! upper bound `psi * a - g(psi) >= f(a)`, tight at `psi = 1/(e^a - 1)`.
//! A Jensen split of the activation gives the matching lower bound.

use crate::error::{NorError, Result};
use crate::model::ModelParams;

/// Activations below this floor are clamped before evaluating `f`, so the
/// log-likelihood of a positive observation stays finite even at `a = 0`.
pub const FLOOR_A: f64 = 1e-6;

/// `ln(1 - e^{-a})` for `a > 0`, evaluated without cancellation.
pub fn log1m_exp_neg(a: f64) -> f64 {
    // Split at ln 2: below it 1 - e^{-a} is small, above it e^{-a} is small.
    if a < std::f64::consts::LN_2 {
        (-(-a).exp_m1()).ln()
    } else {
        (-(-a).exp()).ln_1p()
    }
}

fn check_dims(params: &ModelParams, i: usize, z: &[f64]) -> Result<()> {
    if i >= params.d() {
        return Err(NorError::DimMismatch(format!(
            "dimension index {i} out of range for D={}",
            params.d()
        )));
    }
    if z.len() != params.k() {
        return Err(NorError::DimMismatch(format!(
            "latent vector has length {}, expected K={}",
            z.len(),
            params.k()
        )));
    }
    Ok(())
}

/// Activation `a_i = theta_i0 + sum_k theta_ik z_k` for a (possibly relaxed)
/// latent configuration `z` with entries in [0, 1].
pub fn activation(params: &ModelParams, i: usize, z: &[f64]) -> Result<f64> {
    check_dims(params, i, z)?;
    let row = params.theta.row(i);
    let mut a = params.theta0[i];
    for (t, zk) in row.iter().zip(z) {
        a += t * zk;
    }
    Ok(a)
}

/// `ln p(x_i = 0 | z) = -a_i`.
pub fn log_lik_negative(params: &ModelParams, i: usize, z: &[f64]) -> Result<f64> {
    Ok(-activation(params, i, z)?)
}

/// `ln p(x_i = 1 | z) = f(a_i)`, with the activation clamped to [`FLOOR_A`].
pub fn log_lik_positive(params: &ModelParams, i: usize, z: &[f64]) -> Result<f64> {
    let a = activation(params, i, z)?;
    Ok(log1m_exp_neg(a.max(FLOOR_A)))
}

/// `f(s) = ln(1 - e^{-s})` for `s > 0`.
pub fn conjugate_f(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(NorError::Domain(format!("f requires s > 0, got {s}")));
    }
    Ok(log1m_exp_neg(s))
}

/// Conjugate dual `g(t) = -t ln t + (t+1) ln(t+1)` for `t > 0`.
pub fn conjugate_g(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(NorError::Domain(format!("g requires t > 0, got {t}")));
    }
    Ok(-t * t.ln() + (t + 1.0) * (t + 1.0).ln())
}

/// Linear upper bound `psi * a_i - g(psi) >= ln p(x_i = 1 | z)`.
pub fn ub_log_lik(params: &ModelParams, i: usize, z: &[f64], psi_i: f64) -> Result<f64> {
    let a = activation(params, i, z)?;
    Ok(psi_i * a - conjugate_g(psi_i)?)
}

/// The pointwise minimizer `psi = f'(a) = 1/(e^a - 1)` where the upper bound
/// touches `f(a)`.
pub fn tight_psi(a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(NorError::Domain(format!("tight_psi requires a > 0, got {a}")));
    }
    Ok(1.0 / a.exp_m1())
}

/// Jensen lower bound on `ln p(x_i = 1 | z)` for a simplex split `lambda_i`:
/// `sum_k lambda_ik f(theta_i0 + theta_ik z_k / lambda_ik)`.
///
/// Components with `lambda_ik = 0` contribute their limit value of zero.
/// Requires a strictly positive leak weight; the bound is undefined at
/// `f(0)`.
pub fn lb_log_lik(params: &ModelParams, i: usize, z: &[f64], lambda_i: &[f64]) -> Result<f64> {
    check_dims(params, i, z)?;
    if lambda_i.len() != params.k() {
        return Err(NorError::DimMismatch(format!(
            "responsibilities have length {}, expected K={}",
            lambda_i.len(),
            params.k()
        )));
    }
    let t0 = params.theta0[i];
    if !(t0 > 0.0) {
        return Err(NorError::Domain(
            "lower bound requires a positive leak weight".into(),
        ));
    }
    if lambda_i.iter().any(|&l| !l.is_finite() || l < 0.0) {
        return Err(NorError::Domain("responsibilities must be non-negative".into()));
    }
    let sum: f64 = lambda_i.iter().sum();
    if (sum - 1.0).abs() > crate::model::SIMPLEX_TOL {
        return Err(NorError::Domain(format!(
            "responsibilities must sum to 1, got {sum}"
        )));
    }
    let f0 = log1m_exp_neg(t0);
    let mut total = 0.0;
    for k in 0..params.k() {
        let lam = lambda_i[k];
        if lam == 0.0 {
            continue;
        }
        let load = params.theta[(i, k)] * z[k];
        total += if load == 0.0 {
            lam * f0
        } else {
            lam * log1m_exp_neg(t0 + load / lam)
        };
    }
    Ok(total)
}
