//! Mini-batch Adam training of the three inference methods, with the
//! exponential temperature schedule, validation-based early stopping, and a
//! best-checkpoint return. A run is a deterministic function of its seed,
//! configuration, and data order.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adam::{adam_step, AdamState};
use crate::encoder::Activation;
use crate::error::{NorError, Result};
use crate::exact::positive_dims;
use crate::fixpoint::{cdi_fixed_point_lb_from, svi_fit_datum};
use crate::flat::{
    build_layout, encoder_from_flat, init_encoder_flat, init_generative, load_generative,
    params_from_flat, FlatParams, GenShape, SegmentKind,
};
use crate::loss::{build_loss, GumbelNoise, LossContext, Method, MethodLoss, TermMask};
use crate::metrics::heldout_nelbo;
use crate::model::{BinaryDataset, BoundState, ModelParams, PosteriorFactors};
use crate::posterior::{conjugate_posterior, SviState};
use crate::tape::Tape;

/// Hyperparameters of a training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub method: Method,
    pub latent_dim: usize,
    pub batch_size: usize,
    /// Monte Carlo samples per datum for the relaxed positive term.
    pub mc_samples: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_decay: f64,
    pub tau_interval: u64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub learn_mu: bool,
    pub mu_init: f64,
    /// Hidden layer widths of the encoder (input/output added per method).
    pub hidden: Vec<usize>,
    pub hidden_act: Activation,
    /// Samples for the validation NELBO estimate.
    pub val_mc_samples: usize,
    pub eval_seed: u64,
    /// Projected-gradient steps per responsibility refresh (SVI).
    pub lambda_refresh_iters: usize,
}

impl TrainConfig {
    pub fn new(method: Method, latent_dim: usize) -> Self {
        TrainConfig {
            method,
            latent_dim,
            batch_size: 128,
            mc_samples: 10,
            learning_rate: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            tau0: 0.5,
            tau_min: 0.2,
            tau_decay: 0.97,
            tau_interval: 100,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            learn_mu: false,
            mu_init: 0.1,
            hidden: Vec::new(),
            hidden_act: Activation::Relu,
            val_mc_samples: 100,
            eval_seed: 9001,
            lambda_refresh_iters: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 >= self.tau_min && self.tau_min > 0.0) {
            return Err(NorError::Config(format!(
                "temperature schedule needs tau0 >= tau_min > 0, got {} and {}",
                self.tau0, self.tau_min
            )));
        }
        if self.mc_samples < 1 {
            return Err(NorError::Config("mc_samples must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(NorError::Config("batch_size must be at least 1".into()));
        }
        if self.latent_dim < 1 {
            return Err(NorError::Config("latent_dim must be at least 1".into()));
        }
        if !(self.mu_init > 0.0 && self.mu_init < 1.0) {
            return Err(NorError::Config("mu_init must lie in (0,1)".into()));
        }
        Ok(())
    }

    /// Encoder widths for this method, or `None` for SVI. The default
    /// hidden stack is a single layer of width `2 * max(D, K)`.
    pub fn encoder_widths(&self, d: usize) -> Option<Vec<usize>> {
        let out = match self.method {
            Method::Acp => d,
            Method::Avi => self.latent_dim,
            Method::Svi => return None,
        };
        let mut widths = vec![d];
        if self.hidden.is_empty() {
            widths.push(2 * d.max(self.latent_dim));
        } else {
            widths.extend(&self.hidden);
        }
        widths.push(out);
        Some(widths)
    }
}

/// Exponential decay with a floor: `max(tau_min, tau0 * r^(step/interval))`.
pub fn temperature_at(step: u64, cfg: &TrainConfig) -> f64 {
    let applications = (step / cfg.tau_interval) as i32;
    (cfg.tau0 * cfg.tau_decay.powi(applications)).max(cfg.tau_min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: u64,
    pub train_nelbo: f64,
    pub val_nelbo: f64,
    pub temperature: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOutcome {
    Completed,
    EarlyStopped,
    /// The loss went non-finite; the best checkpoint seen so far is
    /// returned.
    Diverged,
}

pub struct TrainResult {
    pub flat: FlatParams,
    pub shape: GenShape,
    pub encoder_widths: Option<Vec<usize>>,
    pub log: Vec<EpochLog>,
    pub outcome: TrainOutcome,
    pub best_val: f64,
    pub svi: Option<SviState>,
}

impl TrainResult {
    /// Generative parameters of the checkpoint (the frozen ones when
    /// inference-only).
    pub fn params(&self, frozen: Option<&ModelParams>) -> Result<ModelParams> {
        match frozen {
            Some(p) => Ok(p.clone()),
            None => params_from_flat(&self.flat, self.shape),
        }
    }

    pub fn encoder(&self, cfg: &TrainConfig) -> Result<Option<crate::encoder::EncoderParams>> {
        match &self.encoder_widths {
            None => Ok(None),
            Some(widths) => Ok(Some(encoder_from_flat(
                &self.flat,
                widths,
                cfg.hidden_act,
                match cfg.method {
                    Method::Acp => Activation::Softplus,
                    _ => Activation::Sigmoid,
                },
            )?)),
        }
    }
}

/// Posterior provider for evaluation, shared by validation and the CLI.
pub fn posterior_provider<'a>(
    method: Method,
    params: &'a ModelParams,
    flat: &'a FlatParams,
    widths: Option<&'a [usize]>,
    cfg: &'a TrainConfig,
) -> impl Fn(&[u8]) -> Result<PosteriorFactors> + 'a {
    move |x: &[u8]| match method {
        Method::Acp => {
            let widths = widths.expect("acp encoder widths");
            let enc = encoder_from_flat(flat, widths, cfg.hidden_act, Activation::Softplus)?;
            let xf: Vec<f64> = x.iter().map(|&b| b as f64).collect();
            let psi_all = enc.forward(&xf)?;
            let psi: Vec<f64> = positive_dims(x).iter().map(|&i| psi_all[i]).collect();
            conjugate_posterior(params, x, &psi)
        }
        Method::Avi => {
            let widths = widths.expect("avi encoder widths");
            let enc = encoder_from_flat(flat, widths, cfg.hidden_act, Activation::Sigmoid)?;
            let xf: Vec<f64> = x.iter().map(|&b| b as f64).collect();
            PosteriorFactors::new(ndarray::Array1::from(enc.forward(&xf)?))
        }
        Method::Svi => svi_fit_datum(params, x, 60, 0.5),
    }
}

fn init_svi_logits(flat: &mut FlatParams, n: usize, k: usize, mu: &[f64]) {
    if let Some(seg) = flat.segment_mut(SegmentKind::SviLogits) {
        for row in 0..n {
            for (kk, &m) in mu.iter().enumerate() {
                seg[row * k + kk] = (m / (1.0 - m)).ln();
            }
        }
    }
}

/// Runs mini-batch training and returns the best-validation checkpoint.
///
/// When `frozen_generative` is provided the generative parameters are
/// loaded from it and excluded from optimization (inference-only mode).
pub fn train(
    cfg: &TrainConfig,
    train_ds: &BinaryDataset,
    val_ds: &BinaryDataset,
    frozen_generative: Option<&ModelParams>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let d = train_ds.d();
    let k = cfg.latent_dim;
    if val_ds.d() != d {
        return Err(NorError::DimMismatch(format!(
            "validation width {} does not match training width {d}",
            val_ds.d()
        )));
    }
    if let Some(p) = frozen_generative {
        if p.d() != d || p.k() != k {
            return Err(NorError::DimMismatch(format!(
                "frozen parameters are {}x{}, run expects {d}x{k}",
                p.d(),
                p.k()
            )));
        }
    }
    let shape = GenShape { d, k };
    let n = train_ds.n();
    let learn_generative = frozen_generative.is_none();
    let widths = cfg.encoder_widths(d);
    let svi_rows = if cfg.method == Method::Svi { n } else { 0 };
    let layout = build_layout(
        shape,
        widths.as_deref(),
        learn_generative,
        cfg.learn_mu && learn_generative,
        svi_rows,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut flat = FlatParams::zeros(layout);
    match frozen_generative {
        Some(p) => load_generative(&mut flat, p),
        None => init_generative(&mut flat, shape, cfg.mu_init, &mut rng),
    }
    if let Some(w) = &widths {
        init_encoder_flat(&mut flat, w, &mut rng);
    }
    let mut svi_lambda: Vec<Vec<Vec<f64>>> = Vec::new();
    if cfg.method == Method::Svi {
        let mu_now = match frozen_generative {
            Some(p) => p.mu.to_vec(),
            None => vec![cfg.mu_init; k],
        };
        init_svi_logits(&mut flat, n, k, &mu_now);
        svi_lambda = train_ds
            .x
            .rows()
            .into_iter()
            .map(|row| {
                let pos = positive_dims(row.as_slice().expect("contiguous"));
                vec![vec![1.0 / k as f64; k]; pos.len()]
            })
            .collect();
    }

    let ctx = LossContext {
        shape,
        encoder_widths: widths.clone(),
        hidden_act: cfg.hidden_act,
        tau: cfg.tau0,
        l_samples: cfg.mc_samples,
        terms: TermMask::default(),
    };

    let validate_now = |flat: &FlatParams| -> Result<f64> {
        let params = match frozen_generative {
            Some(p) => p.clone(),
            None => params_from_flat(flat, shape)?,
        };
        let provider = posterior_provider(cfg.method, &params, flat, widths.as_deref(), cfg);
        heldout_nelbo(&params, provider, val_ds, cfg.val_mc_samples, cfg.eval_seed)
    };

    let started = std::time::Instant::now();
    let mut best_flat = flat.clone();
    let mut best_val = validate_now(&flat)?;
    let mut stall = 0usize;
    let mut adam = AdamState::new(flat.values.len());
    let mut log = Vec::new();
    let mut outcome = TrainOutcome::Completed;
    let mut global_step = 0u64;
    let tape = Tape::new();
    let mut order: Vec<usize> = (0..n).collect();

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size.min(n.max(1))) {
            let tau = temperature_at(global_step, cfg);
            let mut ctx_step = ctx.clone();
            ctx_step.tau = tau;
            let noise = match cfg.method {
                Method::Svi => None,
                _ => Some(GumbelNoise::draw(batch.len(), cfg.mc_samples, k, &mut rng)),
            };
            if cfg.method == Method::Svi {
                // refresh responsibilities for the batch at the current
                // posterior and generative parameters
                let params = match frozen_generative {
                    Some(p) => p.clone(),
                    None => params_from_flat(&flat, shape)?,
                };
                let logits = flat.segment(SegmentKind::SviLogits).expect("svi segment");
                let qs: Vec<PosteriorFactors> = batch
                    .iter()
                    .map(|&row| {
                        PosteriorFactors::new(
                            logits[row * k..(row + 1) * k]
                                .iter()
                                .map(|&l| crate::tape::stable_sigmoid(l))
                                .collect(),
                        )
                    })
                    .collect::<Result<_>>()?;
                for (&row, q) in batch.iter().zip(&qs) {
                    let x = train_ds.x.row(row);
                    let fp = cdi_fixed_point_lb_from(
                        &params,
                        x.as_slice().expect("contiguous"),
                        q,
                        std::mem::take(&mut svi_lambda[row]),
                        1e-10,
                        cfg.lambda_refresh_iters,
                    )?;
                    svi_lambda[row] = match fp.state {
                        BoundState::Lower { lambda } => lambda,
                        BoundState::Upper { .. } => unreachable!(),
                    };
                }
            }

            tape.clear();
            let method_loss = MethodLoss {
                method: cfg.method,
                layout: &flat.layout,
                ctx: &ctx_step,
                data: &train_ds.x,
                idx: batch,
                noise: noise.as_ref(),
                svi_lambda: if cfg.method == Method::Svi {
                    Some(&svi_lambda)
                } else {
                    None
                },
            };
            let loss_var = match build_loss(&tape, &flat.values, &method_loss) {
                Ok(v) => v,
                Err(NorError::Numerical(msg)) => {
                    outcome = TrainOutcome::Diverged;
                    log_divergence(&msg);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let loss_val = loss_var.value();
            if !loss_val.is_finite() {
                outcome = TrainOutcome::Diverged;
                log_divergence("non-finite batch loss");
                break 'epochs;
            }
            let grads_all = tape.backward(loss_var);
            let mut grads = grads_all.leading(flat.values.len()).to_vec();
            flat.mask_frozen(&mut grads);
            if adam_step(
                &mut adam,
                &mut flat.values,
                &grads,
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            )
            .is_err()
            {
                outcome = TrainOutcome::Diverged;
                log_divergence("non-finite gradient");
                break 'epochs;
            }
            epoch_loss += loss_val * batch.len() as f64;
            seen += batch.len();
            global_step += 1;
        }

        let val = validate_now(&flat)?;
        log.push(EpochLog {
            epoch,
            step: global_step,
            train_nelbo: epoch_loss / seen.max(1) as f64,
            val_nelbo: val,
            temperature: temperature_at(global_step, cfg),
            wall_ms: started.elapsed().as_millis() as u64,
        });
        if val < best_val {
            best_val = val;
            best_flat = flat.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall > cfg.patience {
                outcome = TrainOutcome::EarlyStopped;
                break;
            }
        }
    }

    let svi = if cfg.method == Method::Svi {
        let logits = best_flat
            .segment(SegmentKind::SviLogits)
            .expect("svi segment");
        Some(SviState {
            logits: Array2::from_shape_vec((n, k), logits.to_vec())
                .map_err(|e| NorError::DimMismatch(e.to_string()))?,
            lambda: svi_lambda,
        })
    } else {
        None
    };

    Ok(TrainResult {
        flat: best_flat,
        shape,
        encoder_widths: widths,
        log,
        outcome,
        best_val,
        svi,
    })
}

fn log_divergence(msg: &str) {
    eprintln!("training aborted: {msg}; returning the best checkpoint");
}
