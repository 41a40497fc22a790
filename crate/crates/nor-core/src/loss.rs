//! Tape-built training losses for the three learned inference methods.
//!
//! All three share the same ELBO assembly: an analytic negative-observation
//! term, an analytic KL to the prior, and a positive-observation term that
//! is Monte Carlo with Gumbel-softmax relaxation (ACP, AVI) or the analytic
//! expected conjugate lower bound (SVI). They differ in where the posterior
//! logits come from:
//!
//! * ACP: `psi = encoder(x)`, logits from the conjugate form — so the
//!   logits depend on both the encoder and the generative weights;
//! * AVI: logits straight from the encoder;
//! * SVI: free per-datum logits held in the parameter vector.
//!
//! Losses are negative batch-mean ELBOs. Gradients come from the tape in
//! `crate::tape`; every loss is checkable against finite differences via
//! [`grad_check`](crate::tape::grad_check).

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::FLOOR_A;
use crate::encoder::Activation;
use crate::error::{NorError, Result};
use crate::exact::positive_dims;
use crate::flat::{GenShape, Layout, SegmentKind};
use crate::gumbel::GumbelPair;
use crate::posterior::SviState;
use crate::tape::{ScalarLoss, Tape, Var};

/// Inference strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Acp,
    Avi,
    Svi,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Acp => write!(f, "acp"),
            Method::Avi => write!(f, "avi"),
            Method::Svi => write!(f, "svi"),
        }
    }
}

/// Gumbel noise for a batch, shaped `(batch, L, K)`; pairs are drawn in a
/// fixed order so a seeded source reproduces the tensor exactly.
#[derive(Debug, Clone)]
pub struct GumbelNoise {
    pub batch: usize,
    pub l: usize,
    pub k: usize,
    deltas: Vec<f64>,
}

impl GumbelNoise {
    pub fn draw<R: Rng>(batch: usize, l: usize, k: usize, rng: &mut R) -> Self {
        let deltas = (0..batch * l * k)
            .map(|_| GumbelPair::sample(rng).delta())
            .collect();
        GumbelNoise { batch, l, k, deltas }
    }

    pub fn delta(&self, b: usize, li: usize, kk: usize) -> f64 {
        self.deltas[(b * self.l + li) * self.k + kk]
    }
}

/// Which ELBO terms to assemble; used by structural tests that isolate
/// gradient paths. Training always uses all three.
#[derive(Debug, Clone, Copy)]
pub struct TermMask {
    pub positive: bool,
    pub negative: bool,
    pub kl: bool,
}

impl Default for TermMask {
    fn default() -> Self {
        TermMask {
            positive: true,
            negative: true,
            kl: true,
        }
    }
}

/// Static description of a loss: shapes, encoder architecture, relaxation
/// settings.
#[derive(Debug, Clone)]
pub struct LossContext {
    pub shape: GenShape,
    /// Encoder layer widths including input and output; `None` for SVI.
    pub encoder_widths: Option<Vec<usize>>,
    pub hidden_act: Activation,
    pub tau: f64,
    pub l_samples: usize,
    pub terms: TermMask,
}

/// Everything a loss evaluation needs besides the raw parameter vector.
pub struct MethodLoss<'a> {
    pub method: Method,
    pub layout: &'a Layout,
    pub ctx: &'a LossContext,
    pub data: &'a Array2<u8>,
    pub idx: &'a [usize],
    pub noise: Option<&'a GumbelNoise>,
    /// Responsibilities for the SVI positive term, indexed like the data.
    pub svi_lambda: Option<&'a [Vec<Vec<f64>>]>,
}

/// Prior pieces per latent dimension, shared across the batch. The raw
/// parameter is the prior logit itself (`mu = sigmoid(raw)`), so
/// `-ln mu = softplus(-raw)` and `-ln(1 - mu) = softplus(raw)`.
struct MuPieces<'t> {
    logit: Vec<Var<'t>>,
    sp_pos: Vec<Var<'t>>,
    sp_neg: Vec<Var<'t>>,
}

fn segment_vars<'t>(leaves: &[Var<'t>], layout: &Layout, kind: SegmentKind) -> Result<Vec<Var<'t>>> {
    layout
        .range(kind)
        .map(|r| leaves[r].to_vec())
        .ok_or_else(|| NorError::Config(format!("layout is missing segment {kind:?}")))
}

/// Bernoulli KL against the prior, written in terms of the posterior logit:
/// `q l - softplus(l) + q softplus(-m) + (1-q) softplus(m)` with `m` the
/// prior logit.
fn kl_term<'t>(q: Var<'t>, l: Var<'t>, mu: &MuPieces<'t>, kk: usize) -> Var<'t> {
    q * l - l.softplus() + q * mu.sp_neg[kk] + (1.0 - q) * mu.sp_pos[kk]
}

/// Builds the loss graph on `tape` and returns the scalar loss node.
pub fn build_loss<'t>(
    tape: &'t Tape,
    values: &[f64],
    loss: &MethodLoss<'_>,
) -> Result<Var<'t>> {
    let layout = loss.layout;
    let ctx = loss.ctx;
    let d = ctx.shape.d;
    let k = ctx.shape.k;
    if values.len() != layout.total {
        return Err(NorError::DimMismatch(format!(
            "parameter vector has length {}, layout expects {}",
            values.len(),
            layout.total
        )));
    }
    if loss.data.ncols() != d {
        return Err(NorError::DimMismatch(format!(
            "data has width {}, expected D={d}",
            loss.data.ncols()
        )));
    }
    let leaves = tape.leaves(values);

    // generative parameters through their transforms
    let theta: Vec<Var<'t>> = segment_vars(&leaves, layout, SegmentKind::ThetaRaw)?
        .iter()
        .map(|v| v.softplus())
        .collect();
    let theta0: Vec<Var<'t>> = segment_vars(&leaves, layout, SegmentKind::Theta0Raw)?
        .iter()
        .map(|v| v.softplus())
        .collect();
    let mu_raw = segment_vars(&leaves, layout, SegmentKind::MuRaw)?;
    let mu = MuPieces {
        sp_pos: mu_raw.iter().map(|raw| raw.softplus()).collect(),
        sp_neg: mu_raw.iter().map(|&raw| (-raw).softplus()).collect(),
        logit: mu_raw,
    };

    // per-column coupling sums, shared across the batch
    let mut col_scratch: Vec<Var<'t>> = Vec::with_capacity(d);
    let mut colsum = Vec::with_capacity(k);
    for kk in 0..k {
        col_scratch.clear();
        for i in 0..d {
            col_scratch.push(theta[i * k + kk]);
        }
        colsum.push(tape.sum(&col_scratch));
    }
    let theta0_sum = tape.sum(&theta0);

    let enc = match loss.method {
        Method::Svi => None,
        _ => Some(encoder_widths(ctx)?),
    };

    let mut elbos: Vec<Var<'t>> = Vec::with_capacity(loss.idx.len());
    let mut x_f: Vec<f64> = vec![0.0; d];
    for (b, &row_idx) in loss.idx.iter().enumerate() {
        let row = loss.data.row(row_idx);
        let x = row.as_slice().ok_or_else(|| {
            NorError::Numerical("data rows must be contiguous".into())
        })?;
        for (dst, &src) in x_f.iter_mut().zip(x) {
            *dst = src as f64;
        }
        let pos = positive_dims(x);

        // Positive-dimension coupling sums for this datum.
        let mut pos_theta: Vec<Var<'t>> = Vec::with_capacity(k);
        let mut scratch: Vec<Var<'t>> = Vec::with_capacity(pos.len());
        for kk in 0..k {
            scratch.clear();
            for &i in &pos {
                scratch.push(theta[i * k + kk]);
            }
            pos_theta.push(tape.sum(&scratch));
        }

        // Posterior logits per method.
        let q_logits: Vec<Var<'t>> = match loss.method {
            Method::Acp => {
                let widths = enc.as_ref().expect("encoder widths");
                let psi_pos = encoder_rows(tape, &leaves, layout, widths, ctx.hidden_act, &x_f, &pos)?
                    .iter()
                    .map(|v| v.softplus())
                    .collect::<Vec<_>>();
                (0..k)
                    .map(|kk| {
                        let theta_pos_k: Vec<Var<'t>> =
                            pos.iter().map(|&i| theta[i * k + kk]).collect();
                        let s = tape.dot(&psi_pos, &theta_pos_k) + pos_theta[kk] - colsum[kk];
                        s + mu.logit[kk]
                    })
                    .collect()
            }
            Method::Avi => {
                let widths = enc.as_ref().expect("encoder widths");
                let all: Vec<usize> = (0..k).collect();
                encoder_rows(tape, &leaves, layout, widths, ctx.hidden_act, &x_f, &all)?
            }
            Method::Svi => {
                let svi = segment_vars(&leaves, layout, SegmentKind::SviLogits)?;
                svi[row_idx * k..(row_idx + 1) * k].to_vec()
            }
        };
        let q: Vec<Var<'t>> = q_logits.iter().map(|l| l.sigmoid()).collect();

        let mut elbo = tape.constant(0.0);

        if ctx.terms.positive && !pos.is_empty() {
            match loss.method {
                Method::Svi => {
                    let lambda = loss
                        .svi_lambda
                        .ok_or_else(|| NorError::Config("SVI loss needs responsibilities".into()))?;
                    let lam_rows = &lambda[row_idx];
                    if lam_rows.len() != pos.len() {
                        return Err(NorError::DimMismatch(format!(
                            "datum {row_idx} has {} responsibility vectors for {} positive dims",
                            lam_rows.len(),
                            pos.len()
                        )));
                    }
                    for (lam, &i) in lam_rows.iter().zip(&pos) {
                        let f0 = theta0[i].log1m_exp_neg();
                        let lam_eff: Vec<f64> = lam
                            .iter()
                            .map(|&l| if l > 1e-12 { l } else { 0.0 })
                            .collect();
                        let mut on_terms: Vec<Var<'t>> = Vec::with_capacity(k);
                        for kk in 0..k {
                            let l = lam_eff[kk];
                            if l == 0.0 {
                                continue;
                            }
                            let y = theta[i * k + kk].scale(1.0 / l) + theta0[i];
                            let fy = y.log1m_exp_neg();
                            on_terms.push((q[kk] * fy).scale(l));
                        }
                        let on = tape.sum(&on_terms);
                        let off_weight = 1.0 - tape.dot_vc(&q, &lam_eff);
                        elbo = elbo + on + off_weight * f0;
                    }
                }
                _ => {
                    let noise = loss
                        .noise
                        .ok_or_else(|| NorError::Config("Monte Carlo loss needs noise".into()))?;
                    if noise.batch < loss.idx.len() || noise.k != k || noise.l != ctx.l_samples {
                        return Err(NorError::DimMismatch(
                            "noise tensor does not match (batch, L, K)".into(),
                        ));
                    }
                    let inv_tau = 1.0 / ctx.tau;
                    let mut mc: Vec<Var<'t>> = Vec::with_capacity(ctx.l_samples * pos.len());
                    let mut z: Vec<Var<'t>> = Vec::with_capacity(k);
                    for li in 0..ctx.l_samples {
                        z.clear();
                        for (kk, lg) in q_logits.iter().enumerate() {
                            let shifted = (*lg + noise.delta(b, li, kk)).scale(inv_tau);
                            z.push(shifted.sigmoid());
                        }
                        for &i in &pos {
                            let theta_row: Vec<Var<'t>> =
                                (0..k).map(|kk| theta[i * k + kk]).collect();
                            let a = tape.dot(&theta_row, &z) + theta0[i];
                            mc.push(a.max_const(FLOOR_A).log1m_exp_neg());
                        }
                    }
                    elbo = elbo + tape.sum(&mc).scale(1.0 / ctx.l_samples as f64);
                }
            }
        }

        if ctx.terms.negative {
            // -(sum_{i0} theta_i0 + sum_k (colsum_k - pos_theta_k) q_k)
            let theta0_pos: Vec<Var<'t>> = pos.iter().map(|&i| theta0[i]).collect();
            let neg_leak = theta0_sum - tape.sum(&theta0_pos);
            let neg_coupling: Vec<Var<'t>> = (0..k)
                .map(|kk| colsum[kk] - pos_theta[kk])
                .collect();
            elbo = elbo - neg_leak - tape.dot(&neg_coupling, &q);
        }

        if ctx.terms.kl {
            let kl_terms: Vec<Var<'t>> = (0..k)
                .map(|kk| kl_term(q[kk], q_logits[kk], &mu, kk))
                .collect();
            elbo = elbo - tape.sum(&kl_terms);
        }

        if !elbo.value().is_finite() {
            return Err(NorError::Numerical(format!(
                "non-finite ELBO for datum {row_idx}"
            )));
        }
        elbos.push(elbo);
    }

    Ok(tape.sum(&elbos).scale(-1.0 / loss.idx.len() as f64))
}

fn encoder_widths(ctx: &LossContext) -> Result<Vec<usize>> {
    ctx.encoder_widths
        .clone()
        .ok_or_else(|| NorError::Config("amortized loss needs encoder widths".into()))
}

/// Forward pass of the encoder on the tape, producing only the requested
/// final-layer pre-activations (rows of the output layer not in `rows` cost
/// nothing and receive no gradient).
fn encoder_rows<'t>(
    tape: &'t Tape,
    leaves: &[Var<'t>],
    layout: &Layout,
    widths: &[usize],
    hidden_act: Activation,
    x: &[f64],
    rows: &[usize],
) -> Result<Vec<Var<'t>>> {
    let n_layers = widths.len() - 1;
    let mut hidden: Vec<Var<'t>> = Vec::new();
    for li in 0..n_layers - 1 {
        let (fan_in, fan_out) = (widths[li], widths[li + 1]);
        let w = segment_vars(leaves, layout, SegmentKind::EncoderWeight(li))?;
        let bias = segment_vars(leaves, layout, SegmentKind::EncoderBias(li))?;
        let mut next = Vec::with_capacity(fan_out);
        for j in 0..fan_out {
            let row = &w[j * fan_in..(j + 1) * fan_in];
            let pre = if li == 0 {
                tape.dot_vc(row, x) + bias[j]
            } else {
                tape.dot(row, &hidden) + bias[j]
            };
            next.push(match hidden_act {
                Activation::Relu => pre.relu(),
                Activation::Tanh => pre.tanh(),
                Activation::Sigmoid => pre.sigmoid(),
                Activation::Softplus => pre.softplus(),
                Activation::Identity => pre,
            });
        }
        hidden = next;
    }
    let li = n_layers - 1;
    let (fan_in, fan_out) = (widths[li], widths[li + 1]);
    let w = segment_vars(leaves, layout, SegmentKind::EncoderWeight(li))?;
    let bias = segment_vars(leaves, layout, SegmentKind::EncoderBias(li))?;
    let mut out = Vec::with_capacity(rows.len());
    for &j in rows {
        if j >= fan_out {
            return Err(NorError::DimMismatch(format!(
                "encoder output row {j} out of range for width {fan_out}"
            )));
        }
        let row = &w[j * fan_in..(j + 1) * fan_in];
        let pre = if n_layers == 1 {
            tape.dot_vc(row, x) + bias[j]
        } else {
            tape.dot(row, &hidden) + bias[j]
        };
        out.push(pre);
    }
    Ok(out)
}

impl ScalarLoss for MethodLoss<'_> {
    fn value(&self, p: &[f64]) -> f64 {
        let tape = Tape::new();
        match build_loss(&tape, p, self) {
            Ok(v) => v.value(),
            Err(_) => f64::NAN,
        }
    }

    fn value_and_grad(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let tape = Tape::new();
        match build_loss(&tape, p, self) {
            Ok(v) => {
                let g = tape.backward(v);
                // parameter leaves were pushed first, in order
                (v.value(), g.leading(p.len()).to_vec())
            }
            Err(_) => (f64::NAN, vec![f64::NAN; p.len()]),
        }
    }
}

/// Negative batch-mean ELBO for ACP.
pub fn loss_acp(
    values: &[f64],
    layout: &Layout,
    ctx: &LossContext,
    data: &Array2<u8>,
    idx: &[usize],
    noise: &GumbelNoise,
) -> Result<f64> {
    let tape = Tape::new();
    let loss = MethodLoss {
        method: Method::Acp,
        layout,
        ctx,
        data,
        idx,
        noise: Some(noise),
        svi_lambda: None,
    };
    Ok(build_loss(&tape, values, &loss)?.value())
}

/// Negative batch-mean ELBO for AVI.
pub fn loss_avi(
    values: &[f64],
    layout: &Layout,
    ctx: &LossContext,
    data: &Array2<u8>,
    idx: &[usize],
    noise: &GumbelNoise,
) -> Result<f64> {
    let tape = Tape::new();
    let loss = MethodLoss {
        method: Method::Avi,
        layout,
        ctx,
        data,
        idx,
        noise: Some(noise),
        svi_lambda: None,
    };
    Ok(build_loss(&tape, values, &loss)?.value())
}

/// Negative batch-mean ELBO for SVI (fully analytic).
pub fn loss_svi(
    values: &[f64],
    layout: &Layout,
    ctx: &LossContext,
    data: &Array2<u8>,
    idx: &[usize],
    state: &SviState,
) -> Result<f64> {
    let tape = Tape::new();
    let loss = MethodLoss {
        method: Method::Svi,
        layout,
        ctx,
        data,
        idx,
        noise: None,
        svi_lambda: Some(&state.lambda),
    };
    Ok(build_loss(&tape, values, &loss)?.value())
}
