//! `norlab` — dataset generation, training, evaluation, bound diagnostics,
//! and pattern export for the noisy-OR inference library.

mod checkpoint;
mod commands;
mod config;
mod pgm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nor_core::loss::Method;
use nor_core::NorError;

use commands::{BoundKind, CdiArgs, EvalArgs, Provider};

#[derive(Parser)]
#[command(name = "norlab", version, about = "Noisy-OR variational inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (params, train/val/test splits, summary).
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train an inference method and write a checkpoint.
    Train {
        #[arg(long, value_enum)]
        method: CliMethod,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth parameter file enabling F1/EM and pattern matching.
        #[arg(long)]
        true_params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        provider: Provider,
        /// Sample latent predictions from the posterior instead of
        /// thresholding at 0.5.
        #[arg(long)]
        sample_latents: bool,
        /// Tokenized corpus (one document per line) for a topic coherence
        /// report; needs --vocab.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Prebuilt co-occurrence cache JSON; alternative to --corpus.
        #[arg(long)]
        cooccur: Option<PathBuf>,
        /// Vocabulary file, one word per observed dimension.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
    /// Tighten a conjugate bound on the test split and trace the result.
    Cdi {
        #[arg(long, value_enum)]
        kind: BoundKind,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seeds the bound-parameter initialization (upper bound only).
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        max_iter: usize,
    },
    /// Render weight columns (and the leak) as PGM images.
    ExportPatterns {
        /// Checkpoint directory or a params.json path.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a (dataset, method, n_train, seeds) grid and aggregate NELBOs.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Parallel workers (default 1).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum CliMethod {
    Acp,
    Avi,
    Svi,
}

impl From<CliMethod> for Method {
    fn from(m: CliMethod) -> Method {
        match m {
            CliMethod::Acp => Method::Acp,
            CliMethod::Avi => Method::Avi,
            CliMethod::Svi => Method::Svi,
        }
    }
}

fn exit_code_for(err: &NorError) -> u8 {
    match err {
        NorError::Numerical(_) => 3,
        NorError::Capacity(_) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> nor_core::Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => commands::cmd_generate(&config, &out, seed),
        Command::Train {
            method,
            data,
            config,
            out,
            seed,
        } => commands::cmd_train(method.into(), &data, config.as_deref(), &out, seed),
        Command::Eval {
            checkpoint,
            data,
            out,
            true_params,
            provider,
            sample_latents,
            corpus,
            cooccur,
            vocab,
            top_n,
        } => commands::cmd_eval(&EvalArgs {
            checkpoint: &checkpoint,
            data: &data,
            out: &out,
            true_params: true_params.as_deref(),
            provider,
            sample_latents,
            corpus: corpus.as_deref(),
            cooccur: cooccur.as_deref(),
            vocab: vocab.as_deref(),
            top_n,
        }),
        Command::Cdi {
            kind,
            params,
            data,
            out,
            seed,
            max_iter,
        } => commands::cmd_cdi(&CdiArgs {
            kind,
            params: &params,
            data: &data,
            out: &out,
            seed,
            max_iter,
        }),
        Command::ExportPatterns {
            checkpoint,
            height,
            width,
            out,
        } => commands::cmd_export_patterns(&checkpoint, height, width, &out),
        Command::Sweep {
            manifest,
            out,
            jobs,
        } => commands::cmd_sweep(&manifest, &out, jobs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
