use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use granulab_core::pipeline::{self, EstimatorSelector, PipelineError, Preset, RunConfig, Split};

#[derive(Parser)]
#[command(name = "granulab", version, about = "Synthetic particle-size datasets and PSD estimator evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset: sample, settle, render and annotate scenes.
    Generate {
        /// TOML file whose keys override the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "desk", value_parser = ["desk", "paper"])]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses one per core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction CSV against a dataset manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// JSON report path; a .txt table and scatter files are written beside it.
        #[arg(long)]
        report: PathBuf,
        /// Only score records of this split.
        #[arg(long, value_parser = ["train", "val", "test"])]
        split: Option<String>,
    },
    /// Run the baseline estimator over a dataset and write a prediction CSV.
    Predict {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Time an estimator over a dataset's images.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        /// `baseline` or `fixed-latency-ms:N`.
        #[arg(long, default_value = "baseline")]
        estimator: String,
        #[arg(long, default_value_t = 5)]
        warmup: u32,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        #[arg(long, default_value = "cpu")]
        device_label: String,
        #[arg(long, default_value = "bench_report.json")]
        report: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Generate { config, preset, seed, workers, out } => {
            let preset: Preset = preset.parse()?;
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path, preset)?,
                None => RunConfig::preset(preset),
            };
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let records = pipeline::generate(&cfg, workers)?;
            println!("wrote {} scenes to {}", records.len(), cfg.output_dir.display());
        }
        Command::Evaluate { manifest, predictions, report, split } => {
            let split = split.map(|s| s.parse::<Split>()).transpose()?;
            let result = pipeline::evaluate(&manifest, &predictions, &report, split)?;
            print!("{}", result.to_table());
        }
        Command::Predict { manifest, out, workers } => {
            let set = pipeline::predict_baseline(&manifest, &out, workers)?;
            println!("wrote {} predictions to {}", set.records.len(), out.display());
        }
        Command::Bench { manifest, estimator, warmup, reps, device_label, report } => {
            let selector: EstimatorSelector = estimator.parse()?;
            let result = pipeline::bench(&manifest, selector, warmup, reps, &device_label, &report)?;
            print!("{}", result.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
