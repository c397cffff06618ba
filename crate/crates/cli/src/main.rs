//! `mcce` — multi-cell channel estimation laboratory.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CheckpointPaths;
use mcce_core::scenario::IngestNormalization;

#[derive(Parser)]
#[command(
    name = "mcce",
    version,
    about = "Synthesize pilot-contaminated channel datasets, train conditionally \
             Gaussian VAEs, and benchmark LMMSE-style estimators"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MCCE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize and save the train/val/test datasets of a scenario.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: paths.data_dir from the config).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Substitute the priors of this AoA pair (from eval.aoa_pairs) and
        /// nest outputs under its label.
        #[arg(long)]
        pair: Option<String>,
    },
    /// Train a VAE on generated datasets.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding train.mcce / val.mcce (default from config).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Checkpoint output path (default: paths.model_dir / kind).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Train with noiseless targets and noiseless encoder inputs.
        #[arg(long)]
        genie: bool,
        /// Train the single-cell ablation model.
        #[arg(long)]
        single_cell: bool,
        /// Resume from an existing checkpoint (continues epoch numbering).
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        pair: Option<String>,
    },
    /// Evaluate the configured estimators at the fixed evaluation SNR.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Test dataset (default: <data_dir>/test.mcce).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Training dataset for sample statistics (default:
        /// <data_dir>/train.mcce when present).
        #[arg(long)]
        train_data: Option<PathBuf>,
        /// Report output path (CSV).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        ckpt_vae: Option<PathBuf>,
        #[arg(long)]
        ckpt_vae_genie: Option<PathBuf>,
        #[arg(long)]
        ckpt_single: Option<PathBuf>,
        #[arg(long)]
        pair: Option<String>,
    },
    /// NMSE over the configured SNR grid (fixed channels, fresh noise per
    /// grid point).
    SweepSnr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        ckpt_vae: Option<PathBuf>,
        #[arg(long)]
        ckpt_vae_genie: Option<PathBuf>,
        #[arg(long)]
        ckpt_single: Option<PathBuf>,
        #[arg(long)]
        pair: Option<String>,
    },
    /// NMSE over the configured AoA prior pairs at the fixed SNR. Expects
    /// per-pair artifacts under <data_root>/<label>/ and
    /// <model_root>/<label>/.
    SweepAoa {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data_root: Option<PathBuf>,
        #[arg(long)]
        model_root: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ingest an externally generated channels-only dataset file and
    /// synthesize observations.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-observation normalization: cumulative-path-gain or none.
        #[arg(long, default_value = "cumulative-path-gain")]
        normalization: String,
        #[arg(long)]
        snr_db: Option<f64>,
        /// Uniform per-record SNR range in dB, e.g. --snr-range -16 36.
        #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
        snr_range: Option<Vec<f64>>,
        #[arg(long)]
        noiseless: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Apply dataset-level unit-signal-power normalization afterward.
        #[arg(long)]
        normalize: bool,
    },
    /// Print or convert an NMSE report.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// table (stdout), csv or plot-data (require --out).
        #[arg(long, default_value = "table")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Gen {
            config,
            out_dir,
            pair,
        } => commands::cmd_gen(&config, out_dir, pair),
        Command::Train {
            config,
            data_dir,
            out,
            genie,
            single_cell,
            resume,
            pair,
        } => commands::cmd_train(&config, data_dir, out, genie, single_cell, resume, pair),
        Command::Eval {
            config,
            data,
            train_data,
            out,
            ckpt_vae,
            ckpt_vae_genie,
            ckpt_single,
            pair,
        } => commands::cmd_eval(
            &config,
            data,
            train_data,
            out,
            CheckpointPaths {
                vae: ckpt_vae,
                vae_genie: ckpt_vae_genie,
                single: ckpt_single,
            },
            pair,
            false,
        ),
        Command::SweepSnr {
            config,
            data,
            train_data,
            out,
            ckpt_vae,
            ckpt_vae_genie,
            ckpt_single,
            pair,
        } => commands::cmd_eval(
            &config,
            data,
            train_data,
            out,
            CheckpointPaths {
                vae: ckpt_vae,
                vae_genie: ckpt_vae_genie,
                single: ckpt_single,
            },
            pair,
            true,
        ),
        Command::SweepAoa {
            config,
            data_root,
            model_root,
            out,
        } => commands::cmd_sweep_aoa(&config, data_root, model_root, out),
        Command::Ingest {
            input,
            out,
            normalization,
            snr_db,
            snr_range,
            noiseless,
            seed,
            normalize,
        } => {
            let norm = match normalization.as_str() {
                "cumulative-path-gain" => IngestNormalization::CumulativePathGain,
                "none" => IngestNormalization::None,
                other => anyhow::bail!(
                    "unknown normalization `{other}` (use cumulative-path-gain or none)"
                ),
            };
            let range = match snr_range.as_deref() {
                Some([low, high]) => Some((*low, *high)),
                Some(_) => anyhow::bail!("--snr-range takes exactly two values"),
                None => None,
            };
            commands::cmd_ingest(
                &input, &out, norm, snr_db, range, noiseless, seed, normalize,
            )
        }
        Command::Report { input, format, out } => commands::cmd_report(&input, &format, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
