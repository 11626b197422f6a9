use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fluosim::config::{preset, PRESETS};
use fluosim::pipeline::{evaluate, generate, make_flow};

#[derive(Parser)]
#[command(name = "fluosim", version, about = "Synthetic fluorescence particle-tracking sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a sequence and write images, ground truth and a manifest.
    Generate {
        /// Scenario preset.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        preset: String,
        /// TOML file with overrides applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted tracks against ground truth with single-threshold HOTA.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Matching distance in pixels.
        #[arg(long, default_value_t = fluosim::eval::DEFAULT_ETA)]
        eta: f64,
        /// Also write the result record to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic contraction flow file for the hydra-flow preset.
    MakeFlow {
        /// Grid size, e.g. `1024,1024`.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
        /// Peak fraction of the offset to the center moved per frame.
        #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
        peak: f64,
    },
}

fn run(cli: Cli) -> fluosim::Result<()> {
    match cli.command {
        Command::Generate {
            preset: name,
            config,
            seed,
            out,
        } => {
            let mut cfg = preset(&name)?;
            if let Some(path) = config {
                cfg = cfg.with_override_file(&path)?;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output.dir = out;
            }
            let summary = generate(&cfg)?;
            println!(
                "wrote {} frames with {} tracks to {}",
                summary.ground_truth.frame_count(),
                summary.ground_truth.len(),
                summary.out_dir.display()
            );
        }
        Command::Evaluate { gt, pred, eta, out } => {
            let record = evaluate(&gt, &pred, eta)?;
            let text = record.to_toml()?;
            print!("{text}");
            if let Some(out) = out {
                std::fs::write(out, text)?;
            }
        }
        Command::MakeFlow {
            dims,
            frames,
            out,
            peak,
        } => {
            make_flow(&dims, frames, peak, &out)?;
            println!("wrote {frames} flow fields for grid {dims:?} to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
