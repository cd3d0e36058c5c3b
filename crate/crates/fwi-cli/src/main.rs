//! `fwi`: command-line orchestration of the offline training and online
//! reconstruction pipeline, with JSON configuration and seeded
//! reproducibility.

mod commands;
mod config;
mod provenance;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use fwi_core::FwiError;

#[derive(Parser)]
#[command(name = "fwi", version, about = "Learned-preconditioner full waveform inversion")]
struct Cli {
    /// Worker thread count; overrides the FWI_WORKERS environment variable.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a training/testing dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the approximate inverse on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a velocity field from a signal by truncated series.
    Invert {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        terms: usize,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Iterate clamp "lo:hi"; defaults to the model's velocity range
        /// widened to [lo/2, 2 hi].
        #[arg(long)]
        clamp: Option<String>,
    },
    /// Series warm start followed by BFGS on the data-mismatch objective
    /// over the extended source/receiver battery.
    Hybrid {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        terms: usize,
        #[arg(long, default_value_t = 100)]
        bfgs_iters: usize,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Objective-landscape scans (1D mode scans or 2D location scans).
    Landscape {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validation metrics of a trained model over a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate at most this many samples.
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn init_workers(flag: Option<usize>) {
    let count = flag.or_else(|| {
        std::env::var("FWI_WORKERS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(n) = count {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Exit 2 for configuration/schema problems, 1 for runtime failures.
fn classify(err: &FwiError) -> u8 {
    match err {
        FwiError::InvalidArgument(_)
        | FwiError::UnsupportedVersion(_)
        | FwiError::Json(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers(cli.workers);
    let result = match cli.command {
        Command::GenData { config, out, seed } => commands::gen_data::run(&config, &out, seed),
        Command::Train { data, config, out } => commands::train::run(&data, &config, &out),
        Command::Invert {
            model,
            signal,
            terms,
            truth,
            out,
            clamp,
        } => commands::invert::run(&model, &signal, terms, truth.as_deref(), &out, clamp.as_deref()),
        Command::Hybrid {
            model,
            signal,
            terms,
            bfgs_iters,
            truth,
            out,
        } => commands::hybrid::run(&model, &signal, terms, bfgs_iters, truth.as_deref(), &out),
        Command::Landscape { model, scan, out } => commands::landscape::run(&model, &scan, &out),
        Command::Eval {
            model,
            data,
            out,
            limit,
        } => commands::eval::run(&model, &data, &out, limit),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = classify(&err);
            eprintln!(
                "{}",
                serde_json::json!({"error": if code == 2 {"config"} else {"runtime"}, "detail": err.to_string()})
            );
            ExitCode::from(code)
        }
    }
}
