//! JSON configuration schemas. Unknown keys are rejected so sweep typos
//! fail loudly.

use std::path::{Path, PathBuf};

use nor_core::encoder::Activation;
use nor_core::loss::Method;
use nor_core::train::TrainConfig;
use nor_core::{NorError, Result};
use serde::Deserialize;

/// Reads a config file and reports schema violations with the offending
/// fields.
pub fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| NorError::Config(format!("{}: {e}", path.display())))
}

/// Dataset generation: either pattern images or random sparse weights.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternGenConfig {
    /// Named preset; currently `syn-pattern` (built-in 8x8 patterns,
    /// D=64, K=8, mu=0.125).
    #[serde(default)]
    pub preset: Option<String>,
    /// Seed choosing the built-in bar/block patterns.
    #[serde(default = "default_pattern_seed")]
    pub pattern_seed: u64,
    /// User-supplied pattern images (PGM), one per latent cause.
    #[serde(default)]
    pub patterns_pgm: Option<Vec<PathBuf>>,
    /// Leak image (PGM); all-white when omitted.
    #[serde(default)]
    pub leak_pgm: Option<PathBuf>,
    #[serde(default)]
    pub w_on: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    pub n_train: usize,
    pub seed: u64,
}

fn default_pattern_seed() -> u64 {
    42
}

fn default_n_test() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseGenConfig {
    pub d: usize,
    pub k: usize,
    pub alpha_theta: f64,
    pub beta_theta: f64,
    pub alpha_mu: f64,
    pub beta_mu: f64,
    pub sparsity_control: f64,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    pub n_train: usize,
    pub seed: u64,
}

pub enum GenerateConfig {
    Pattern(PatternGenConfig),
    Sparse(SparseGenConfig),
}

impl GenerateConfig {
    /// Parses `{"kind": "pattern" | "sparse", ...}` strictly.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| NorError::Config(format!("{}: {e}", path.display())))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| NorError::Config("config must be a JSON object".into()))?;
        let kind = obj
            .remove("kind")
            .and_then(|v| v.as_str().map(str::to_string))
            .ok_or_else(|| NorError::Config("config needs a \"kind\" field".into()))?;
        let rest = serde_json::Value::Object(obj.clone());
        match kind.as_str() {
            "pattern" => Ok(GenerateConfig::Pattern(
                serde_json::from_value(rest)
                    .map_err(|e| NorError::Config(format!("pattern config: {e}")))?,
            )),
            "sparse" => Ok(GenerateConfig::Sparse(
                serde_json::from_value(rest)
                    .map_err(|e| NorError::Config(format!("sparse config: {e}")))?,
            )),
            other => Err(NorError::Config(format!(
                "unknown generator kind {other:?} (expected \"pattern\" or \"sparse\")"
            ))),
        }
    }
}

/// Training configuration file. Every field has a default so short configs
/// stay short; `method` may instead come from the command line.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainFileConfig {
    pub method: Option<Method>,
    pub latent_dim: Option<usize>,
    /// Use only the first `n_train` training rows.
    pub n_train: Option<usize>,
    /// Learn the generative parameters; when false they are loaded from
    /// the data directory's params.json and frozen.
    pub train_generative: Option<bool>,
    pub batch_size: Option<usize>,
    pub mc_samples: Option<usize>,
    pub learning_rate: Option<f64>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub tau0: Option<f64>,
    pub tau_min: Option<f64>,
    pub tau_decay: Option<f64>,
    pub tau_interval: Option<u64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub learn_mu: Option<bool>,
    pub mu_init: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub hidden_act: Option<Activation>,
    pub val_mc_samples: Option<usize>,
    pub lambda_refresh_iters: Option<usize>,
}

impl TrainFileConfig {
    /// Resolves against library defaults for the given method and K.
    pub fn resolve(&self, method: Method, latent_dim: usize, eval_seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(method, latent_dim);
        cfg.eval_seed = eval_seed;
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { cfg.$field = v; })*
            };
        }
        take!(
            batch_size,
            mc_samples,
            learning_rate,
            adam_beta1,
            adam_beta2,
            adam_eps,
            tau0,
            tau_min,
            tau_decay,
            tau_interval,
            max_epochs,
            patience,
            seed,
            learn_mu,
            mu_init,
            hidden,
            hidden_act,
            val_mc_samples,
            lambda_refresh_iters
        );
        cfg
    }

    pub fn train_generative(&self) -> bool {
        self.train_generative.unwrap_or(true)
    }
}

/// One sweep cell: a data directory, a method, a training-set size, and the
/// seeds to average over.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub data: PathBuf,
    pub method: Method,
    pub n_train: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    pub cells: Vec<SweepCell>,
    /// Training settings shared by every cell.
    #[serde(default)]
    pub train: TrainFileConfig,
}
