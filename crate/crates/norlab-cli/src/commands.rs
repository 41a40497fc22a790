//! Command implementations for the experiment harness.

use std::path::Path;

use ndarray::{Array1, Array2};
use nor_core::datagen::{
    builtin_syn_pattern_spec, default_w_on, gen_patterned, gen_sparse, read_dataset,
    sample_dataset, sparsity, write_dataset, PatternSpec, SparseSpec,
};
use nor_core::encoder::{encode_acp, encode_avi};
use nor_core::exact::{elbo_mc_test, exact_posterior, positive_dims, K_ENUM_MAX};
use nor_core::fixpoint::{lb_cdi_fit, svi_fit_datum, ub_tighten_dim};
use nor_core::loss::Method;
use nor_core::metrics::{
    exact_match, heldout_nelbo, infer_latents, macro_f1, match_patterns, sample_latents,
};
use nor_core::model::{BinaryDataset, ModelParams, PosteriorFactors};
use nor_core::pmi::{build_cooccur_from_text, topic_report, CooccurStats};
use nor_core::posterior::conjugate_posterior;
use nor_core::train::{train, TrainOutcome};
use nor_core::{NorError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::{eval_seed, read_checkpoint, write_checkpoint, Checkpoint};
use crate::config::{
    read_config, GenerateConfig, PatternGenConfig, SweepManifest, TrainFileConfig,
};
use crate::pgm;

#[derive(Serialize)]
struct GenerateSummary {
    kind: String,
    d: usize,
    k: usize,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
    sparsity_train: f64,
    sparsity_val: f64,
    sparsity_test: f64,
}

fn pattern_spec_from_config(cfg: &PatternGenConfig) -> Result<PatternSpec> {
    if let Some(preset) = &cfg.preset {
        if preset != "syn-pattern" {
            return Err(NorError::Config(format!("unknown preset {preset:?}")));
        }
        if cfg.patterns_pgm.is_some() || cfg.leak_pgm.is_some() {
            return Err(NorError::Config(
                "preset and explicit pattern images are mutually exclusive".into(),
            ));
        }
        let mut spec = builtin_syn_pattern_spec(cfg.pattern_seed);
        if let Some(w) = cfg.w_on {
            spec.w_on = w;
        }
        if let Some(m) = cfg.mu {
            spec.mu = Array1::from_elem(spec.patterns.len(), m);
        }
        return Ok(spec);
    }
    let paths = cfg.patterns_pgm.as_ref().ok_or_else(|| {
        NorError::Config("pattern config needs either a preset or patterns_pgm".into())
    })?;
    let patterns: Vec<Array2<u8>> = paths
        .iter()
        .map(|p| pgm::read_binary_pattern(p))
        .collect::<Result<_>>()?;
    let leak = match &cfg.leak_pgm {
        Some(p) => pgm::read_binary_pattern(p)?,
        None => {
            let dim = patterns
                .first()
                .ok_or_else(|| NorError::Config("patterns_pgm must not be empty".into()))?
                .dim();
            Array2::zeros(dim)
        }
    };
    let mu = cfg.mu.ok_or_else(|| {
        NorError::Config("pattern config with explicit images needs \"mu\"".into())
    })?;
    Ok(PatternSpec {
        mu: Array1::from_elem(patterns.len(), mu),
        patterns,
        leak,
        w_on: cfg.w_on.unwrap_or_else(default_w_on),
    })
}

pub fn cmd_generate(config: &Path, out: &Path, seed_override: Option<u64>) -> Result<()> {
    let cfg = GenerateConfig::from_path(config)?;
    std::fs::create_dir_all(out)?;
    let (params, kind, n_train, n_test, seed) = match &cfg {
        GenerateConfig::Pattern(p) => {
            let spec = pattern_spec_from_config(p)?;
            let seed = seed_override.unwrap_or(p.seed);
            (gen_patterned(&spec)?, "pattern", p.n_train, p.n_test, seed)
        }
        GenerateConfig::Sparse(s) => {
            let seed = seed_override.unwrap_or(s.seed);
            let spec = SparseSpec {
                d: s.d,
                k: s.k,
                alpha_theta: s.alpha_theta,
                beta_theta: s.beta_theta,
                alpha_mu: s.alpha_mu,
                beta_mu: s.beta_mu,
                sparsity_control: s.sparsity_control,
                n_test: s.n_test,
                seed,
            };
            (gen_sparse(&spec)?, "sparse", s.n_train, s.n_test, seed)
        }
    };
    std::fs::write(out.join("params.json"), params.to_json())?;
    let splits = [
        ("train.nords", n_train, seed),
        ("val.nords", n_test, seed.wrapping_add(1)),
        ("test.nords", n_test, seed.wrapping_add(2)),
    ];
    let mut sparsities = [0.0f64; 3];
    for (slot, (name, n, split_seed)) in sparsities.iter_mut().zip(splits) {
        let ds = sample_dataset(&params, n, split_seed, true)?;
        *slot = sparsity(&ds);
        write_dataset(&out.join(name), &ds, params.k())?;
    }
    let summary = GenerateSummary {
        kind: kind.to_string(),
        d: params.d(),
        k: params.k(),
        n_train,
        n_val: n_test,
        n_test,
        seed,
        sparsity_train: sparsities[0],
        sparsity_val: sparsities[1],
        sparsity_test: sparsities[2],
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serialize"),
    )?;
    println!(
        "generated {kind} dataset: D={} K={} train={} sparsity={:.4}",
        params.d(),
        params.k(),
        n_train,
        sparsities[0]
    );
    Ok(())
}

pub fn cmd_train(
    method: Method,
    data: &Path,
    config: Option<&Path>,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<()> {
    let file_cfg: TrainFileConfig = match config {
        Some(path) => read_config(path)?,
        None => TrainFileConfig::default(),
    };
    if let Some(m) = file_cfg.method {
        if m != method {
            return Err(NorError::Config(format!(
                "config requests method {m}, command line says {method}"
            )));
        }
    }
    let train_full = read_dataset(&data.join("train.nords"))?;
    let val_ds = read_dataset(&data.join("val.nords"))?;
    let params_path = data.join("params.json");
    let true_params = if params_path.exists() {
        Some(ModelParams::from_json(&std::fs::read_to_string(
            &params_path,
        )?)?)
    } else {
        None
    };
    let latent_dim = file_cfg
        .latent_dim
        .or(true_params.as_ref().map(|p| p.k()))
        .ok_or_else(|| {
            NorError::Config("latent_dim is required when the data directory has no params.json".into())
        })?;
    let mut cfg = file_cfg.resolve(method, latent_dim, eval_seed()?);
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let train_ds = match file_cfg.n_train {
        Some(n) => train_full.take(n)?,
        None => train_full,
    };
    let frozen = if file_cfg.train_generative() {
        None
    } else {
        Some(true_params.as_ref().ok_or_else(|| {
            NorError::Config(
                "inference-only training needs params.json in the data directory".into(),
            )
        })?)
    };
    let result = train(&cfg, &train_ds, &val_ds, frozen.map(|p| p as _))?;
    write_checkpoint(out, &cfg, &result, frozen)?;
    println!(
        "trained {method}: best validation NELBO {:.4} over {} epochs ({})",
        result.best_val,
        result.log.len(),
        crate::checkpoint::outcome_name(result.outcome)
    );
    if result.outcome == TrainOutcome::Diverged {
        return Err(NorError::Numerical(
            "training diverged; best checkpoint was written".into(),
        ));
    }
    Ok(())
}

/// Posterior source for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Provider {
    /// The checkpoint's own method (encoder for ACP/AVI, per-datum fit for
    /// SVI).
    Auto,
    Encoder,
    Svi,
    /// Exact enumeration posterior (debug; needs K within enumeration
    /// capacity).
    Exact,
}

fn make_provider<'a>(
    provider: Provider,
    ckpt: &'a Checkpoint,
) -> Result<Box<dyn Fn(&[u8]) -> Result<PosteriorFactors> + 'a>> {
    let method = ckpt.meta.method;
    let resolved = match provider {
        Provider::Auto => match method {
            Method::Svi => Provider::Svi,
            _ => Provider::Encoder,
        },
        other => other,
    };
    match resolved {
        Provider::Encoder => {
            let enc = ckpt.encoder.as_ref().ok_or_else(|| {
                NorError::Config("checkpoint has no encoder.json".into())
            })?;
            match method {
                Method::Acp => Ok(Box::new(move |x: &[u8]| {
                    let xf: Vec<f64> = x.iter().map(|&b| b as f64).collect();
                    let psi_all = encode_acp(enc, &xf)?;
                    let psi: Vec<f64> =
                        positive_dims(x).iter().map(|&i| psi_all[i]).collect();
                    conjugate_posterior(&ckpt.params, x, &psi)
                })),
                Method::Avi => Ok(Box::new(move |x: &[u8]| {
                    let xf: Vec<f64> = x.iter().map(|&b| b as f64).collect();
                    encode_avi(enc, &xf)
                })),
                Method::Svi => Err(NorError::Config(
                    "an SVI checkpoint has no encoder; use the svi provider".into(),
                )),
            }
        }
        Provider::Svi => Ok(Box::new(move |x: &[u8]| {
            svi_fit_datum(&ckpt.params, x, 200, 0.5)
        })),
        Provider::Exact => {
            if ckpt.params.k() > K_ENUM_MAX {
                return Err(NorError::Capacity(format!(
                    "exact provider needs K <= {K_ENUM_MAX}"
                )));
            }
            Ok(Box::new(move |x: &[u8]| {
                Ok(exact_posterior(&ckpt.params, x)?.marginals)
            }))
        }
        Provider::Auto => unreachable!(),
    }
}

#[derive(Serialize)]
struct EvalReport {
    method: Method,
    provider: String,
    n_test: usize,
    eval_seed: u64,
    nelbo: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_match: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pattern_match_mean: Option<f64>,
    sampled_latents: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    topics: Option<nor_core::pmi::TopicReport>,
}

pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub data: &'a Path,
    pub out: &'a Path,
    pub true_params: Option<&'a Path>,
    pub provider: Provider,
    pub sample_latents: bool,
    pub corpus: Option<&'a Path>,
    pub cooccur: Option<&'a Path>,
    pub vocab: Option<&'a Path>,
    pub top_n: usize,
}

pub fn cmd_eval(args: &EvalArgs<'_>) -> Result<()> {
    let ckpt = read_checkpoint(args.checkpoint)?;
    let test = read_dataset(&args.data.join("test.nords"))?;
    if test.d() != ckpt.params.d() {
        return Err(NorError::DimMismatch(format!(
            "test data has D={}, checkpoint has D={}",
            test.d(),
            ckpt.params.d()
        )));
    }
    std::fs::create_dir_all(args.out)?;
    let seed = eval_seed()?;
    let provider = make_provider(args.provider, &ckpt)?;
    let nelbo = heldout_nelbo(&ckpt.params, &provider, &test, 100, seed)?;

    let truth = args
        .true_params
        .map(|p| -> Result<ModelParams> {
            ModelParams::from_json(&std::fs::read_to_string(p)?)
        })
        .transpose()?;

    let (f1, em, pmatch) = match (&truth, &test.z_true) {
        (Some(true_params), Some(z_true)) => {
            let mut preds = Array2::zeros((test.n(), ckpt.params.k()));
            for (row_idx, row) in test.x.rows().into_iter().enumerate() {
                let x = row.as_slice().expect("contiguous");
                let q = provider(x)?;
                let z = if args.sample_latents {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(row_idx as u64));
                    sample_latents(&q, &mut rng)
                } else {
                    infer_latents(&q, 0.5)
                };
                for (kk, &b) in z.iter().enumerate() {
                    preds[(row_idx, kk)] = b;
                }
            }
            let f1 = macro_f1(z_true, &preds)?;
            let em = exact_match(z_true, &preds)?;
            let pm = match_patterns(&ckpt.params.theta, &true_params.theta)?;
            (Some(f1), Some(em), Some(pm.mean_score))
        }
        _ => (None, None, None),
    };

    let topics = match (&args.corpus, &args.cooccur, &args.vocab) {
        (None, None, None) => None,
        (corpus, cooccur, Some(vocab_path)) => {
            let stats: CooccurStats = match (corpus, cooccur) {
                (Some(path), None) => {
                    build_cooccur_from_text(&std::fs::read_to_string(path)?, 5)
                }
                (None, Some(path)) => {
                    CooccurStats::from_json(&std::fs::read_to_string(path)?)?
                }
                _ => {
                    return Err(NorError::Config(
                        "give exactly one of --corpus or --cooccur".into(),
                    ))
                }
            };
            let vocab: Vec<String> = std::fs::read_to_string(vocab_path)?
                .lines()
                .map(str::to_string)
                .collect();
            Some(topic_report(&ckpt.params.theta, &vocab, args.top_n, &stats)?)
        }
        _ => {
            return Err(NorError::Config(
                "topic reports need --vocab together with --corpus or --cooccur".into(),
            ))
        }
    };

    let report = EvalReport {
        method: ckpt.meta.method,
        provider: format!("{:?}", args.provider).to_lowercase(),
        n_test: test.n(),
        eval_seed: seed,
        nelbo,
        macro_f1: f1,
        exact_match: em,
        pattern_match_mean: pmatch,
        sampled_latents: args.sample_latents,
        topics,
    };
    std::fs::write(
        args.out.join("metrics.json"),
        serde_json::to_string_pretty(&report).expect("report serialize"),
    )?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    std::fs::write(
        args.out.join("row.csv"),
        format!(
            "method,nelbo,f1,em,match_mean\n{},{:.6},{},{},{}\n",
            ckpt.meta.method,
            nelbo,
            fmt(f1),
            fmt(em),
            fmt(pmatch)
        ),
    )?;
    println!(
        "eval {}: NELBO {:.4}{}",
        ckpt.meta.method,
        nelbo,
        f1.map_or(String::new(), |v| format!(
            " F1 {:.4} EM {:.4}",
            v,
            em.unwrap_or(f64::NAN)
        ))
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BoundKind {
    Ub,
    Lb,
}

pub struct CdiArgs<'a> {
    pub kind: BoundKind,
    pub params: &'a Path,
    pub data: &'a Path,
    pub out: &'a Path,
    pub seed: u64,
    pub max_iter: usize,
}

pub fn cmd_cdi(args: &CdiArgs<'_>) -> Result<()> {
    let params = ModelParams::from_json(&std::fs::read_to_string(args.params)?)?;
    let test = read_dataset(&args.data.join("test.nords"))?;
    if test.d() != params.d() {
        return Err(NorError::DimMismatch(format!(
            "test data has D={}, params have D={}",
            test.d(),
            params.d()
        )));
    }
    std::fs::create_dir_all(args.out)?;
    match args.kind {
        BoundKind::Ub => cdi_ub(&params, &test, args),
        BoundKind::Lb => cdi_lb(&params, &test, args),
    }
}

fn elbo_for(params: &ModelParams, x: &[u8], q: &PosteriorFactors, seed: u64) -> Result<f64> {
    if params.k() <= K_ENUM_MAX {
        nor_core::exact::elbo_exact(params, x, q)
    } else {
        elbo_mc_test(params, x, q, 100, seed)
    }
}

fn write_final_metrics(
    params: &ModelParams,
    test: &BinaryDataset,
    qs: &[PosteriorFactors],
    label: &str,
    out: &Path,
) -> Result<()> {
    let seed = eval_seed()?;
    let mut nelbo = 0.0;
    for (row_idx, row) in test.x.rows().into_iter().enumerate() {
        let x = row.as_slice().expect("contiguous");
        nelbo -= elbo_mc_test(params, x, &qs[row_idx], 100, seed.wrapping_add(row_idx as u64))?;
    }
    nelbo /= test.n() as f64;
    let (f1, em) = match &test.z_true {
        Some(z_true) => {
            let mut preds = Array2::zeros((test.n(), params.k()));
            for (row_idx, q) in qs.iter().enumerate() {
                for (kk, &b) in infer_latents(q, 0.5).iter().enumerate() {
                    preds[(row_idx, kk)] = b;
                }
            }
            (
                Some(macro_f1(z_true, &preds)?),
                Some(exact_match(z_true, &preds)?),
            )
        }
        None => (None, None),
    };
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    std::fs::write(
        out.join("row.csv"),
        format!(
            "method,nelbo,f1,em,match_mean\n{label},{nelbo:.6},{},{},\n",
            fmt(f1),
            fmt(em)
        ),
    )?;
    #[derive(Serialize)]
    struct CdiReport {
        method: String,
        nelbo: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        macro_f1: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        exact_match: Option<f64>,
    }
    std::fs::write(
        out.join("metrics.json"),
        serde_json::to_string_pretty(&CdiReport {
            method: label.to_string(),
            nelbo,
            macro_f1: f1,
            exact_match: em,
        })
        .expect("report serialize"),
    )?;
    println!("{label}: NELBO {nelbo:.4}");
    Ok(())
}

/// Upper-bound diagnostics. The Eq.-style tightening is per dimension
/// against the prior expectation, so the traced `mean_ll_ub` is the mean
/// over observations of the summed per-dimension bound objectives — the
/// exact quantity the fixed point minimizes, non-increasing by
/// construction. (The joint surrogate normalizer is *not* monotone along
/// this path: the prior-expectation optimum is generally not the
/// data-level optimum, so the joint figure can tick up as the bound
/// converges; `ub_marginal_loglik` stays available for that quantity.)
/// `mean_elbo` is the true ELBO of the induced conjugate posterior.
fn cdi_ub(params: &ModelParams, test: &BinaryDataset, args: &CdiArgs<'_>) -> Result<()> {
    // dimensions that appear positive anywhere share one bound parameter
    let mut count = vec![0usize; params.d()];
    for row in test.x.rows() {
        for (i, &b) in row.iter().enumerate() {
            if b == 1 {
                count[i] += 1;
            }
        }
    }
    let dims: Vec<usize> = (0..params.d()).filter(|&i| count[i] > 0).collect();
    if dims.is_empty() {
        return Err(NorError::Domain(
            "upper-bound diagnostics need at least one positive observation".into(),
        ));
    }
    // log-uniform initialization around 1
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let tightenings: Vec<_> = dims
        .iter()
        .map(|&i| {
            let init = rng.random_range(-1.0..1.25f64).exp();
            ub_tighten_dim(params, i, init, 1e-10, args.max_iter)
        })
        .collect();
    if tightenings.iter().any(|t| !t.converged) {
        eprintln!(
            "warning: some bound parameters did not converge in {} iterations",
            args.max_iter
        );
    }
    let len = tightenings.iter().map(|t| t.psi.len()).max().unwrap_or(1);
    let at = |trace: &[f64], t: usize| trace[t.min(trace.len() - 1)];

    let seed = eval_seed()?;
    let mut csv = String::from("iter,mean_ll_ub,mean_elbo\n");
    let mut final_qs = Vec::new();
    for t in 0..len {
        let psi_map: std::collections::HashMap<usize, f64> = dims
            .iter()
            .zip(&tightenings)
            .map(|(&i, tr)| (i, at(&tr.psi, t)))
            .collect();
        let ll_ub: f64 = dims
            .iter()
            .zip(&tightenings)
            .map(|(&i, tr)| count[i] as f64 * at(&tr.objective, t))
            .sum::<f64>()
            / test.n() as f64;
        let mut elbo = 0.0;
        let mut qs = Vec::with_capacity(test.n());
        for (row_idx, row) in test.x.rows().into_iter().enumerate() {
            let x = row.as_slice().expect("contiguous");
            let psi: Vec<f64> = positive_dims(x).iter().map(|&i| psi_map[&i]).collect();
            let q = conjugate_posterior(params, x, &psi)?;
            elbo += elbo_for(params, x, &q, seed.wrapping_add(row_idx as u64))?;
            qs.push(q);
        }
        csv.push_str(&format!("{t},{ll_ub:.6},{:.6}\n", elbo / test.n() as f64));
        if t + 1 == len {
            final_qs = qs;
        }
    }
    std::fs::write(args.out.join("trace.csv"), csv)?;
    write_final_metrics(params, test, &final_qs, "ub-cdi", args.out)
}

fn cdi_lb(params: &ModelParams, test: &BinaryDataset, args: &CdiArgs<'_>) -> Result<()> {
    let rounds = args.max_iter;
    let mut traces: Vec<Vec<f64>> = Vec::with_capacity(test.n());
    let mut final_qs = Vec::with_capacity(test.n());
    for row in test.x.rows() {
        let x = row.as_slice().expect("contiguous");
        let fit = lb_cdi_fit(params, x, rounds, 20, 1e-9)?;
        traces.push(fit.trace);
        final_qs.push(fit.q);
    }
    let len = traces.iter().map(Vec::len).max().unwrap_or(1);
    let mut csv = String::from("iter,mean_elbo_lb\n");
    for t in 0..len {
        let mean: f64 = traces
            .iter()
            .map(|tr| tr[t.min(tr.len() - 1)])
            .sum::<f64>()
            / traces.len() as f64;
        csv.push_str(&format!("{t},{mean:.6}\n"));
    }
    std::fs::write(args.out.join("trace.csv"), csv)?;
    write_final_metrics(params, test, &final_qs, "lb-cdi", args.out)
}

pub fn cmd_export_patterns(
    checkpoint: &Path,
    height: usize,
    width: usize,
    out: &Path,
) -> Result<()> {
    let params_path = if checkpoint.is_dir() {
        checkpoint.join("params.json")
    } else {
        checkpoint.to_path_buf()
    };
    let params = ModelParams::from_json(&std::fs::read_to_string(params_path)?)?;
    if height * width != params.d() {
        return Err(NorError::DimMismatch(format!(
            "{height}x{width} image does not cover D={}",
            params.d()
        )));
    }
    std::fs::create_dir_all(out)?;
    for kk in 0..params.k() {
        let col: Vec<f64> = params.theta.column(kk).to_vec();
        pgm::write_weight_image(&out.join(format!("pattern_{kk:02}.pgm")), &col, height, width)?;
    }
    pgm::write_weight_image(
        &out.join("leak.pgm"),
        &params.theta0.to_vec(),
        height,
        width,
    )?;
    println!("wrote {} pattern images to {}", params.k() + 1, out.display());
    Ok(())
}

struct CellOutcome {
    nelbos: Vec<f64>,
    errors: Vec<String>,
}

pub fn cmd_sweep(manifest_path: &Path, out: &Path, jobs: Option<usize>) -> Result<()> {
    let manifest: SweepManifest = read_config(manifest_path)?;
    std::fs::create_dir_all(out)?;
    let mut runs: Vec<(usize, u64)> = Vec::new();
    for (ci, cell) in manifest.cells.iter().enumerate() {
        for &seed in &cell.seeds {
            runs.push((ci, seed));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(1))
        .build()
        .map_err(|e| NorError::Config(e.to_string()))?;
    let results: Vec<(usize, u64, std::result::Result<f64, String>)> = pool.install(|| {
        use rayon::prelude::*;
        runs.par_iter()
            .map(|&(ci, seed)| {
                let cell = &manifest.cells[ci];
                let run_dir = out.join(format!("cell{ci:02}_seed{seed}"));
                let r = run_sweep_cell(cell, &manifest.train, seed, &run_dir)
                    .map_err(|e| e.to_string());
                (ci, seed, r)
            })
            .collect()
    });

    let mut outcomes: Vec<CellOutcome> = manifest
        .cells
        .iter()
        .map(|_| CellOutcome {
            nelbos: Vec::new(),
            errors: Vec::new(),
        })
        .collect();
    for (ci, seed, result) in results {
        match result {
            Ok(nelbo) => outcomes[ci].nelbos.push(nelbo),
            Err(e) => outcomes[ci].errors.push(format!("seed {seed}: {e}")),
        }
    }

    let mut csv = String::from("data,method,n_train,n_seeds,n_ok,nelbo_mean,nelbo_sd,status\n");
    for (cell, outcome) in manifest.cells.iter().zip(&outcomes) {
        let n = outcome.nelbos.len();
        let mean = if n > 0 {
            outcome.nelbos.iter().sum::<f64>() / n as f64
        } else {
            f64::NAN
        };
        let sd = if n > 1 {
            let var = outcome
                .nelbos
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        let status = if outcome.errors.is_empty() {
            "ok".to_string()
        } else {
            format!("failed: {}", outcome.errors.join("; "))
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{}\n",
            cell.data.display(),
            cell.method,
            cell.n_train,
            cell.seeds.len(),
            n,
            mean,
            sd,
            status
        ));
    }
    std::fs::write(out.join("results.csv"), csv)?;
    println!("sweep finished: {} cells", manifest.cells.len());
    Ok(())
}

fn run_sweep_cell(
    cell: &crate::config::SweepCell,
    train_cfg: &TrainFileConfig,
    seed: u64,
    run_dir: &Path,
) -> Result<f64> {
    let mut file_cfg = train_cfg.clone();
    file_cfg.n_train = Some(cell.n_train);
    file_cfg.seed = Some(seed);

    let train_full = read_dataset(&cell.data.join("train.nords"))?;
    let val_ds = read_dataset(&cell.data.join("val.nords"))?;
    let test_ds = read_dataset(&cell.data.join("test.nords"))?;
    let params_path = cell.data.join("params.json");
    let true_params = if params_path.exists() {
        Some(ModelParams::from_json(&std::fs::read_to_string(
            &params_path,
        )?)?)
    } else {
        None
    };
    let latent_dim = file_cfg
        .latent_dim
        .or(true_params.as_ref().map(|p| p.k()))
        .ok_or_else(|| NorError::Config("sweep cells need latent_dim or params.json".into()))?;
    let cfg = file_cfg.resolve(cell.method, latent_dim, eval_seed()?);
    let train_ds = train_full.take(cell.n_train)?;
    let frozen = if file_cfg.train_generative() {
        None
    } else {
        true_params.as_ref()
    };
    let result = train(&cfg, &train_ds, &val_ds, frozen)?;
    std::fs::create_dir_all(run_dir)?;
    write_checkpoint(run_dir, &cfg, &result, frozen)?;
    if result.outcome == TrainOutcome::Diverged {
        return Err(NorError::Numerical("training diverged".into()));
    }

    // test NELBO of the trained model
    let params = result.params(frozen)?;
    let seed_eval = eval_seed()?;
    let provider = nor_core::train::posterior_provider(
        cell.method,
        &params,
        &result.flat,
        result.encoder_widths.as_deref(),
        &cfg,
    );
    let nelbo = heldout_nelbo(&params, provider, &test_ds, 100, seed_eval)?;
    std::fs::write(
        run_dir.join("test_nelbo.json"),
        format!("{{\"nelbo\":{nelbo}}}"),
    )?;
    Ok(nelbo)
}
