use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use iadbench_core::synth::{synth_dataset, SynthSpec};
use iadbench_runner::{
    emit_report, parse_config, run_experiment, ReportFormat, RunOptions, RunResults, RunnerError,
};

mod metrics_cmd;

/// Must name the results schema version; checked by a test.
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (results schema 1)");

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "iadbench", version = VERSION, about = "Deterministic benchmark engine for image anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset in the category/train/test/ground_truth layout.
    Synth {
        /// Spec as inline JSON or a path to a JSON file.
        #[arg(long)]
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config and write results.json, results.csv and report.md.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
        /// Also write each cell's memory bank under <output_dir>/banks/.
        #[arg(long)]
        save_banks: bool,
    },
    /// Compute metrics from a score CSV or from score-map and mask directories.
    #[command(group(ArgGroup::new("input").required(true).args(["scores", "maps"])))]
    Metrics {
        /// CSV with `score,label` columns; label is 0/1 or false/true.
        #[arg(long, conflicts_with_all = ["maps", "masks"])]
        scores: Option<PathBuf>,
        /// Directory of score maps (`.pgm` scaled to [0,1], or `.csv` grids).
        #[arg(long, requires = "masks")]
        maps: Option<PathBuf>,
        /// Directory of masks matched to maps by file stem; a missing mask means a normal image.
        #[arg(long, requires = "maps")]
        masks: Option<PathBuf>,
        #[arg(long, default_value_t = 0.3)]
        pro_limit: f64,
        #[arg(long, default_value_t = 0.05)]
        spro_limit: f64,
        /// Region saturation as a fraction of image area; enables sPRO.
        #[arg(long)]
        saturation: Option<f64>,
    },
    /// Re-render a report from results.json.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

/// A diagnostic for standard error plus the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        Self {
            code: u8::try_from(e.exit_code()).unwrap_or(EXIT_PARTIAL),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { spec, seed, out } => cmd_synth(&spec, seed, &out),
        Command::Run {
            config,
            threads,
            save_banks,
        } => cmd_run(&config, threads, save_banks),
        Command::Metrics {
            scores,
            maps,
            masks,
            pro_limit,
            spro_limit,
            saturation,
        } => metrics_cmd::run(metrics_cmd::Args {
            scores,
            maps,
            masks,
            pro_limit,
            spro_limit,
            saturation,
        }),
        Command::Report { input, format } => cmd_report(&input, format),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("iadbench: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_synth(spec: &str, seed: u64, out: &Path) -> Result<u8, Failure> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        std::fs::read_to_string(spec).map_err(|e| Failure::config(format!("{spec}: {e}")))?
    };
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("invalid spec: {e}")))?;
    let ds = synth_dataset(&spec, seed).map_err(|e| Failure::config(e.to_string()))?;
    ds.write_to(out).map_err(|e| Failure::data(e.to_string()))?;
    let train: usize = ds.train.values().map(Vec::len).sum();
    let test: usize = ds.test.values().map(Vec::len).sum();
    println!(
        "wrote {} categories ({train} train, {test} test images) to {}",
        ds.categories.len(),
        out.display()
    );
    Ok(0)
}

fn cmd_run(config: &Path, threads: Option<usize>, save_banks: bool) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| Failure::config(format!("{}: {e}", config.display())))?;
    let cfg = parse_config(&text)?;
    let mut opts = RunOptions {
        save_banks,
        ..RunOptions::default()
    };
    if let Some(t) = threads {
        opts.threads = t;
    }
    let results = run_experiment(&cfg, &opts)?;
    let failed = results.failed_cells();
    eprintln!(
        "{} cells ({failed} failed); results in {}",
        results.cells.len(),
        cfg.output_dir.display()
    );
    for c in results.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("  {}: {}", c.id, c.error.as_deref().unwrap_or_default());
    }
    Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
}

fn cmd_report(input: &Path, format: Format) -> Result<u8, Failure> {
    let results = RunResults::read(input).map_err(|e| Failure::data(e.to_string()))?;
    let format = match format {
        Format::Csv => ReportFormat::Csv,
        Format::Markdown => ReportFormat::Markdown,
    };
    print!(
        "{}",
        emit_report(&results, format).map_err(|e| Failure::data(e.to_string()))?
    );
    Ok(0)
}
