//! Evaluation metrics: thresholded latent prediction, macro F1 and exact
//! match against ground truth, held-out NELBO, and permutation-matched
//! parameter recovery.

use ndarray::Array2;
use rand::Rng;

use crate::assign::max_sum_assignment;
use crate::error::{NorError, Result};
use crate::exact::elbo_mc_test;
use crate::model::{BinaryDataset, ModelParams, PosteriorFactors};

/// Deterministic latent prediction: `z_k = 1 iff q_k >= threshold` (ties go
/// to 1).
pub fn infer_latents(q: &PosteriorFactors, threshold: f64) -> Vec<u8> {
    q.q.iter().map(|&qk| u8::from(qk >= threshold)).collect()
}

/// Sampled latent prediction, for the sampled evaluation variant.
pub fn sample_latents<R: Rng>(q: &PosteriorFactors, rng: &mut R) -> Vec<u8> {
    q.q.iter()
        .map(|&qk| u8::from(rng.random::<f64>() < qk))
        .collect()
}

fn check_same_shape(a: &Array2<u8>, b: &Array2<u8>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(NorError::DimMismatch(format!(
            "shapes {:?} and {:?} differ",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Per-latent-dimension F1 over the data axis, averaged over dimensions.
/// A dimension with no true and no predicted positives scores 0.
pub fn macro_f1(z_true: &Array2<u8>, z_pred: &Array2<u8>) -> Result<f64> {
    check_same_shape(z_true, z_pred)?;
    let k = z_true.ncols();
    let mut total = 0.0;
    for kk in 0..k {
        let (mut tp, mut fp, mut fne) = (0u64, 0u64, 0u64);
        for (&t, &p) in z_true.column(kk).iter().zip(z_pred.column(kk)) {
            match (t, p) {
                (1, 1) => tp += 1,
                (0, 1) => fp += 1,
                (1, 0) => fne += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fne;
        if denom > 0 {
            total += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(total / k as f64)
}

/// Fraction of rows whose K entries all match.
pub fn exact_match(z_true: &Array2<u8>, z_pred: &Array2<u8>) -> Result<f64> {
    check_same_shape(z_true, z_pred)?;
    let hits = z_true
        .rows()
        .into_iter()
        .zip(z_pred.rows())
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / z_true.nrows() as f64)
}

/// Mean negative ELBO over a dataset with the positive term estimated from
/// `n_samples` posterior draws. Per-datum seeds derive from `seed` and the
/// row index, so the estimate is deterministic.
pub fn heldout_nelbo<F>(
    params: &ModelParams,
    q_provider: F,
    dataset: &BinaryDataset,
    n_samples: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[u8]) -> Result<PosteriorFactors>,
{
    let mut total = 0.0;
    for (row_idx, row) in dataset.x.rows().into_iter().enumerate() {
        let x = row
            .as_slice()
            .ok_or_else(|| NorError::Numerical("data rows must be contiguous".into()))?;
        let q = q_provider(x)?;
        total -= elbo_mc_test(params, x, &q, n_samples, seed.wrapping_add(row_idx as u64))?;
    }
    Ok(total / dataset.n() as f64)
}

/// Outcome of matching learned weight columns against true ones.
#[derive(Debug, Clone)]
pub struct PatternMatch {
    /// `assignment[k]` is the learned column matched to true column `k`.
    pub assignment: Vec<usize>,
    /// Pearson correlation of each matched pair, indexed by true column.
    pub scores: Vec<f64>,
    pub mean_score: f64,
}

fn pearson(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        // constant column: correlation defined as 0
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Solves the max-sum assignment over the K x K Pearson correlation matrix
/// between learned and true weight columns.
pub fn match_patterns(theta_learned: &Array2<f64>, theta_true: &Array2<f64>) -> Result<PatternMatch> {
    if theta_learned.dim() != theta_true.dim() {
        return Err(NorError::DimMismatch(format!(
            "learned weights are {:?}, true weights are {:?}",
            theta_learned.dim(),
            theta_true.dim()
        )));
    }
    let k = theta_true.ncols();
    // corr[(a, b)] = correlation of learned column a with true column b
    let corr = Array2::from_shape_fn((k, k), |(a, b)| {
        pearson(theta_learned.column(a), theta_true.column(b))
    });
    let learned_to_true = max_sum_assignment(&corr);
    let mut assignment = vec![0usize; k];
    for (a, &b) in learned_to_true.iter().enumerate() {
        assignment[b] = a;
    }
    let scores: Vec<f64> = (0..k).map(|b| corr[(assignment[b], b)]).collect();
    let mean_score = scores.iter().sum::<f64>() / k as f64;
    Ok(PatternMatch {
        assignment,
        scores,
        mean_score,
    })
}
