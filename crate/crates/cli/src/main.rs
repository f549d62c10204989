use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use vesselmark::phantom::{analytic_tortuosity, rasterize, write_synthetic_corpus, PhantomSpec};
use vesselmark::pipeline::{emit_stats, eye_stats, RunStatus};
use vesselmark::report::{table2_rows, write_table2};
use vesselmark::{run_pipeline, LabelMapping, PipelineConfig};

const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "vesselmark", version, about = "Vessel tortuosity and dropout attention maps for OCTA projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline over every eye directory under the input root.
    Run {
        /// TOML configuration file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Eyes processed concurrently (0 = one per core).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Rasterize a phantom described by a JSON spec.
    GenPhantom {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for `<name>.png` and `<name>.json`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a synthetic multi-eye corpus in the default input layout.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        eyes: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the per-segment statistics CSV of one eye.
    Stats {
        #[arg(long)]
        eye: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Aggregate per-fold classifier metrics into a Table-2-shaped CSV.
    Table2 {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            input,
            output,
            workers,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(i) = input {
                cfg.input = i;
            }
            if let Some(o) = output {
                cfg.output = o;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let manifest = run_pipeline(&cfg)?;
            let failed = manifest.eyes.iter().filter(|e| e.error.is_some()).count();
            eprintln!(
                "{} eyes, {} failed, manifest at {}",
                manifest.eyes.len(),
                failed,
                cfg.output.join(vesselmark::pipeline::MANIFEST_FILE).display()
            );
            if manifest.status != RunStatus::Success {
                for e in manifest.eyes.iter().filter(|e| e.error.is_some()) {
                    eprintln!("  {}: {}", e.eye_id, e.error.as_deref().unwrap_or_default());
                }
            }
            Ok(ExitCode::from(manifest.exit_code() as u8))
        }
        Command::GenPhantom { spec, out } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let parsed: PhantomSpec = serde_json::from_str(&text).context("parsing phantom spec")?;
            let mask = rasterize(&parsed)?;
            fs::create_dir_all(&out)?;
            let stem = spec.file_stem().and_then(|s| s.to_str()).unwrap_or("phantom");
            vesselmark::io::save_unit(&mask.to_gray(), out.join(format!("{stem}.png")), 8)?;
            fs::write(out.join(format!("{stem}.json")), serde_json::to_string_pretty(&parsed)? + "\n")?;
            match analytic_tortuosity(&parsed) {
                Ok(t) => println!("{stem}: {} pixels, analytic tortuosity {t:.6}", mask.count()),
                Err(_) => println!("{stem}: {} pixels", mask.count()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenCorpus {
            out,
            eyes,
            width,
            height,
            seed,
        } => {
            let ids = write_synthetic_corpus(&out, eyes, width, height, seed, &LabelMapping::default())?;
            println!("wrote {} eyes to {}", ids.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats {
            eye,
            config,
            input,
            output,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(i) = input {
                cfg.input = i;
            }
            let stats = eye_stats(&cfg, &eye)?;
            emit_stats(&eye, &stats, sink(output.as_deref())?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Table2 {
            metrics,
            config,
            output,
        } => {
            let cfg = load_config(config.as_deref())?;
            let rows = table2_rows(&metrics, &cfg.scale_factors)?;
            write_table2(&rows, sink(output.as_deref())?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VESSELMARK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            // errors reaching here happen before any eye is processed
            ExitCode::from(EXIT_USAGE)
        }
    }
}
