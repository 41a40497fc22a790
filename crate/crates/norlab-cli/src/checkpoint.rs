//! Checkpoint directory layout: params.json, encoder.json (amortized
//! methods), and meta.json with the run's configuration echo.

use std::path::Path;

use nor_core::encoder::{Activation, EncoderParams};
use nor_core::loss::Method;
use nor_core::train::{TrainConfig, TrainOutcome, TrainResult};
use nor_core::{ModelParams, NorError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub method: Method,
    pub seed: u64,
    pub latent_dim: usize,
    pub data_dim: usize,
    pub hidden_act: Activation,
    pub encoder_widths: Option<Vec<usize>>,
    pub train_generative: bool,
    pub outcome: String,
    pub best_val_nelbo: f64,
    pub epochs_run: usize,
    pub batch_size: usize,
    pub mc_samples: usize,
    pub learning_rate: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_decay: f64,
    pub tau_interval: u64,
    pub learn_mu: bool,
    pub mu_init: f64,
}

pub struct Checkpoint {
    pub params: ModelParams,
    pub encoder: Option<EncoderParams>,
    pub meta: Meta,
}

pub fn outcome_name(outcome: TrainOutcome) -> &'static str {
    match outcome {
        TrainOutcome::Completed => "completed",
        TrainOutcome::EarlyStopped => "early-stopped",
        TrainOutcome::Diverged => "diverged",
    }
}

pub fn write_checkpoint(
    dir: &Path,
    cfg: &TrainConfig,
    result: &TrainResult,
    frozen: Option<&ModelParams>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let params = result.params(frozen)?;
    std::fs::write(dir.join("params.json"), params.to_json())?;
    if let Some(enc) = result.encoder(cfg)? {
        std::fs::write(dir.join("encoder.json"), enc.to_json())?;
    }
    let meta = Meta {
        method: cfg.method,
        seed: cfg.seed,
        latent_dim: cfg.latent_dim,
        data_dim: result.shape.d,
        hidden_act: cfg.hidden_act,
        encoder_widths: result.encoder_widths.clone(),
        train_generative: frozen.is_none(),
        outcome: outcome_name(result.outcome).to_string(),
        best_val_nelbo: result.best_val,
        epochs_run: result.log.len(),
        batch_size: cfg.batch_size,
        mc_samples: cfg.mc_samples,
        learning_rate: cfg.learning_rate,
        tau0: cfg.tau0,
        tau_min: cfg.tau_min,
        tau_decay: cfg.tau_decay,
        tau_interval: cfg.tau_interval,
        learn_mu: cfg.learn_mu,
        mu_init: cfg.mu_init,
    };
    std::fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta serialize"),
    )?;

    let mut csv = String::from("epoch,step,train_nelbo,val_nelbo,temperature,wall_ms\n");
    for row in &result.log {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{}\n",
            row.epoch, row.step, row.train_nelbo, row.val_nelbo, row.temperature, row.wall_ms
        ));
    }
    std::fs::write(dir.join("train_log.csv"), csv)?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let params = ModelParams::from_json(&std::fs::read_to_string(dir.join("params.json"))?)?;
    let meta: Meta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)
        .map_err(|e| NorError::Format(format!("meta.json: {e}")))?;
    let encoder_path = dir.join("encoder.json");
    let encoder = if encoder_path.exists() {
        Some(EncoderParams::from_json(&std::fs::read_to_string(
            encoder_path,
        )?)?)
    } else {
        None
    };
    Ok(Checkpoint {
        params,
        encoder,
        meta,
    })
}

/// Evaluation seed: `NORLAB_EVAL_SEED` when set, 9001 otherwise.
pub fn eval_seed() -> Result<u64> {
    match std::env::var("NORLAB_EVAL_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| NorError::Config(format!("NORLAB_EVAL_SEED is not an integer: {v}"))),
        Err(_) => Ok(9001),
    }
}
