//! Command-line experiment runner for Hebbian convolutional feature
//! learning: `run` executes a configured experiment; `visualize` produces
//! analysis exports from a saved checkpoint.

use hebb_cli::{config, driver, visualize};

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{named_configuration, ConfigFile, DatasetKind};
use driver::{run_experiment, RunRequest};
use hebb::checkpoint::load_weights;
use hebb::{Error, Result};
use visualize::{
    export_receptive_field_direct, export_weight_histogram, pga_receptive_field, stack_with_weights,
    PgaOptions,
};

#[derive(Parser)]
#[command(name = "hebb", about = "Hebbian convolutional feature-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML configuration file.
    Run {
        /// Path to the configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured seed list (repeatable).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Dataset directory (falls back to the DATA_DIR environment variable).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for data-parallel sections.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Produce analysis exports from a saved weight checkpoint.
    Visualize {
        /// Path to a weight checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: VisualizeMode,
        /// Named configuration the checkpoint was trained under
        /// (required for gradient-ascent receptive fields).
        #[arg(long)]
        config: Option<String>,
        /// Dataset the configuration targets (channel count and input size).
        #[arg(long, default_value = "cifar10")]
        dataset: String,
        /// Output file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stack prefix length for gradient ascent (defaults to the full stack).
        #[arg(long)]
        layer: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VisualizeMode {
    /// Gradient-ascent receptive fields.
    Pga,
    /// Weight histograms.
    Hist,
    /// Direct first-layer filter images.
    Direct,
    /// This mode needs a dataset; it is produced during `run` instead.
    Embed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // single machine-readable line on stderr
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seeds, data_dir, out, threads } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
            }
            let text = std::fs::read_to_string(&config)?;
            let file = ConfigFile::parse(&text)?;
            let req = RunRequest::from_config(&file, &seeds, data_dir, out)?;
            let artifacts = run_experiment(&req)?;
            println!("metrics: {}", artifacts.metrics_csv.display());
            for p in artifacts.checkpoints {
                println!("checkpoint: {}", p.display());
            }
            Ok(())
        }
        Command::Visualize { checkpoint, mode, config, dataset, out, layer } => {
            let banks = load_weights(&checkpoint)?;
            let stem = checkpoint.with_extension("");
            match mode {
                VisualizeMode::Hist => {
                    for (i, bank) in banks.iter().enumerate() {
                        let path = out
                            .clone()
                            .unwrap_or_else(|| stem.clone())
                            .with_extension(format!("hist{i}.csv"));
                        export_weight_histogram(bank, 64, &path)?;
                        println!("histogram: {}", path.display());
                    }
                    Ok(())
                }
                VisualizeMode::Direct => {
                    let bank = banks
                        .first()
                        .ok_or_else(|| Error::Format("checkpoint holds no weight banks".into()))?;
                    let path = out.unwrap_or_else(|| stem.with_extension("filters.ppm"));
                    export_receptive_field_direct(bank, &path)?;
                    println!("filters: {}", path.display());
                    Ok(())
                }
                VisualizeMode::Pga => {
                    let name = config.ok_or_else(|| {
                        Error::Parameter("gradient-ascent mode needs --config <name>".into())
                    })?;
                    let kind = DatasetKind::parse(&dataset)?;
                    let resolved = named_configuration(&name, kind)?;
                    let layers = stack_with_weights(&resolved.spec, &banks)?;
                    let prefix = layer.unwrap_or(layers.len()).min(layers.len());
                    let channels = last_channel_count(&resolved.spec, prefix)?;
                    let path = out.unwrap_or_else(|| stem.with_extension("pga.ppm"));
                    pga_receptive_field(
                        &layers[..prefix],
                        channels,
                        resolved.spec.input_channels,
                        resolved.spec.input_size,
                        &PgaOptions::default(),
                        0,
                        &path,
                    )?;
                    println!("receptive fields: {}", path.display());
                    Ok(())
                }
                VisualizeMode::Embed => Err(Error::Capability(
                    "embedding export needs dataset access; it is written during `run`".into(),
                )),
            }
        }
    }
}

/// Channel count at the top of a stack prefix.
fn last_channel_count(spec: &hebb::arch::NetworkSpec, prefix: usize) -> Result<usize> {
    let shapes = spec.shapes_for(spec.input_size, spec.input_size)?;
    if prefix == 0 {
        return Ok(spec.input_channels);
    }
    shapes
        .get(prefix - 1)
        .map(|&(c, _, _)| c)
        .ok_or_else(|| Error::Parameter(format!("stack has no layer {prefix}")))
}
