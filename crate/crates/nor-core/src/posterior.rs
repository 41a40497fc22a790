//! Posterior constructions induced by the conjugate bounds.
//!
//! Replacing each positive-observation likelihood with its linear upper
//! bound makes the surrogate joint log-linear in `z`, so its exact posterior
//! factorizes into independent Bernoullis with closed-form logits. The
//! Jensen lower bound is linear in `z` outright (each `z_k` is binary) and
//! factorizes the same way.

use ndarray::{Array1, Array2};

use crate::bounds::{conjugate_g, log1m_exp_neg};
use crate::error::{NorError, Result};
use crate::exact::positive_dims;
use crate::model::{ModelParams, PosteriorFactors};
use crate::tape::{stable_sigmoid, stable_softplus};

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn check_obs(params: &ModelParams, x: &[u8]) -> Result<()> {
    if x.len() != params.d() {
        return Err(NorError::DimMismatch(format!(
            "observation has length {}, expected D={}",
            x.len(),
            params.d()
        )));
    }
    Ok(())
}

/// Exact factorized posterior of the upper-bound surrogate joint:
/// `q_k = sigmoid(sum_{i+} psi_i theta_ik - sum_{i0} theta_ik + logit mu_k)`.
///
/// `psi` carries one entry per positive dimension of `x`, ascending.
pub fn conjugate_posterior(
    params: &ModelParams,
    x: &[u8],
    psi: &[f64],
) -> Result<PosteriorFactors> {
    check_obs(params, x)?;
    let pos = positive_dims(x);
    if psi.len() != pos.len() {
        return Err(NorError::DimMismatch(format!(
            "{} bound parameters supplied for {} positive dimensions",
            psi.len(),
            pos.len()
        )));
    }
    if psi.iter().any(|&p| !p.is_finite() || p <= 0.0) {
        return Err(NorError::Domain("psi entries must be positive".into()));
    }
    let k = params.k();
    let mut q = Vec::with_capacity(k);
    for kk in 0..k {
        let col = params.theta.column(kk);
        let mut s = logit(params.mu[kk]);
        // sum over positive dims weighted by psi, minus sum over negatives
        let mut pi = 0;
        for (i, &t) in col.iter().enumerate() {
            if pi < pos.len() && pos[pi] == i {
                s += psi[pi] * t;
                pi += 1;
            } else if x[i] == 0 {
                s -= t;
            }
        }
        q.push(stable_sigmoid(s));
    }
    PosteriorFactors::new(Array1::from(q))
}

/// Factorized posterior of the lower-bound surrogate joint. The positive
/// evidence enters through
/// `B_ik = lambda_ik (f(theta_i0 + theta_ik / lambda_ik) - f(theta_i0))`.
pub fn lb_surrogate_posterior(
    params: &ModelParams,
    x: &[u8],
    lambda: &[Vec<f64>],
) -> Result<PosteriorFactors> {
    check_obs(params, x)?;
    let pos = positive_dims(x);
    if lambda.len() != pos.len() {
        return Err(NorError::DimMismatch(format!(
            "{} responsibility vectors supplied for {} positive dimensions",
            lambda.len(),
            pos.len()
        )));
    }
    let k = params.k();
    let mut evidence = vec![0.0; k];
    for (lam, &i) in lambda.iter().zip(&pos) {
        if lam.len() != k {
            return Err(NorError::DimMismatch(format!(
                "responsibility vector has length {}, expected K={k}",
                lam.len()
            )));
        }
        let t0 = params.theta0[i];
        if !(t0 > 0.0) {
            return Err(NorError::Domain(
                "lower bound requires a positive leak weight".into(),
            ));
        }
        let sum: f64 = lam.iter().sum();
        if lam.iter().any(|&l| !l.is_finite() || l < 0.0)
            || (sum - 1.0).abs() > crate::model::SIMPLEX_TOL
        {
            return Err(NorError::Domain("responsibilities must lie on the simplex".into()));
        }
        let f0 = log1m_exp_neg(t0);
        for kk in 0..k {
            let l = lam[kk];
            let t = params.theta[(i, kk)];
            if l > 0.0 && t > 0.0 {
                evidence[kk] += l * (log1m_exp_neg(t0 + t / l) - f0);
            }
        }
    }
    let mut q = Vec::with_capacity(k);
    for kk in 0..k {
        let mut s = logit(params.mu[kk]) + evidence[kk];
        for (i, &t) in params.theta.column(kk).iter().enumerate() {
            if x[i] == 0 {
                s -= t;
            }
        }
        q.push(stable_sigmoid(s));
    }
    PosteriorFactors::new(Array1::from(q))
}

/// Log normalizer of the upper-bound surrogate joint, in closed form:
///
/// `sum_{i+}(psi_i theta_i0 - g(psi_i)) - sum_{i0} theta_i0
///  + sum_k ln(mu_k e^{c_k} + 1 - mu_k)`
///
/// with `c_k = sum_{i+} psi_i theta_ik - sum_{i0} theta_ik`. This always
/// dominates the exact log marginal.
pub fn ub_marginal_loglik(params: &ModelParams, x: &[u8], psi: &[f64]) -> Result<f64> {
    check_obs(params, x)?;
    let pos = positive_dims(x);
    if psi.len() != pos.len() {
        return Err(NorError::DimMismatch(format!(
            "{} bound parameters supplied for {} positive dimensions",
            psi.len(),
            pos.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &i) in psi.iter().zip(&pos) {
        total += p * params.theta0[i] - conjugate_g(p)?;
    }
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0 {
            total -= params.theta0[i];
        }
    }
    for kk in 0..params.k() {
        let col = params.theta.column(kk);
        let mut c = 0.0;
        let mut pi = 0;
        for (i, &t) in col.iter().enumerate() {
            if pi < pos.len() && pos[pi] == i {
                c += psi[pi] * t;
                pi += 1;
            } else if x[i] == 0 {
                c -= t;
            }
        }
        // ln(mu e^c + 1 - mu) = ln(1 - mu) + softplus(c + logit mu)
        let mu = params.mu[kk];
        total += (1.0 - mu).ln() + stable_softplus(c + logit(mu));
    }
    Ok(total)
}

/// Free per-datum variational parameters for stochastic variational
/// inference: posterior logits and lower-bound responsibilities, one row per
/// datum. The responsibilities are indexed `[datum][positive dim][k]` over
/// each datum's positive dimensions in ascending order.
#[derive(Debug, Clone)]
pub struct SviState {
    pub logits: Array2<f64>,
    pub lambda: Vec<Vec<Vec<f64>>>,
}

impl SviState {
    /// Initializes logits at the prior log-odds and responsibilities
    /// uniformly.
    pub fn init(params: &ModelParams, x: &Array2<u8>) -> Self {
        let n = x.nrows();
        let k = params.k();
        let prior_logit: Vec<f64> = params.mu.iter().map(|&m| logit(m)).collect();
        let mut logits = Array2::zeros((n, k));
        for mut row in logits.rows_mut() {
            for (kk, v) in row.iter_mut().enumerate() {
                *v = prior_logit[kk];
            }
        }
        let lambda = x
            .rows()
            .into_iter()
            .map(|row| {
                let pos = positive_dims(row.as_slice().expect("contiguous"));
                vec![vec![1.0 / k as f64; k]; pos.len()]
            })
            .collect();
        SviState { logits, lambda }
    }

    pub fn n(&self) -> usize {
        self.logits.nrows()
    }
}

/// Posterior of datum `n` under the free-parameter state: `q = sigmoid(logits_n)`.
pub fn svi_posterior(state: &SviState, n: usize) -> Result<PosteriorFactors> {
    if n >= state.n() {
        return Err(NorError::DimMismatch(format!(
            "datum index {n} out of range for {} rows",
            state.n()
        )));
    }
    PosteriorFactors::new(state.logits.row(n).mapv(stable_sigmoid))
}
