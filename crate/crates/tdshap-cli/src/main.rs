//! Command line front end: thin argument parsing over the library
//! pipelines, JSON in and JSON out so plotting stays external.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tdshap::harness::{
    run_experiment, run_valuation, CleansingReport, ExperimentConfig, MethodConfig, ValuationReport,
};
use tdshap::metrics::MetricKind;
use tdshap::simulator::SimScenario;
use tdshap::theory::TheoryReport;

#[derive(Parser)]
#[command(
    name = "tdshap",
    version,
    about = "Data cleansing by thresholded Shapley valuation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: valuate, pick a removal count on
    /// validation, report the test-set change.
    Cleanse {
        /// Experiment description (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Estimate instance values only; the test split is never scored.
    Value {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Exact Shapley values, whatever method the config names. Feasible
    /// for small training splits only.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Replay the thresholding bandit on synthetic reward arms.
    SimulateBandit {
        /// Scenario description (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the sample complexity and failure bounds for a problem size.
    Theory {
        /// Number of training instances.
        #[arg(long)]
        n: usize,
        /// Tolerance around the threshold.
        #[arg(long)]
        epsilon: f64,
        /// accuracy, neg_mae, or neg_mse.
        #[arg(long, value_parser = parse_metric)]
        metric: MetricKind,
        /// Smallest label, for the regression width bounds.
        #[arg(long, requires = "label_hi")]
        label_lo: Option<f64>,
        /// Largest label.
        #[arg(long, requires = "label_lo")]
        label_hi: Option<f64>,
        /// Tree leaf size, to apply the refinement for mean-predicting
        /// leaves (neg_mse only).
        #[arg(long)]
        tree_leaf: Option<usize>,
    },
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown metric {s:?}; expected accuracy, neg_mae, or neg_mse"))
}

fn load_config(path: &Path, output_dir: Option<PathBuf>) -> Result<ExperimentConfig<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut config: ExperimentConfig<f64> = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    if output_dir.is_some() {
        config.output_dir = output_dir;
    }
    Ok(config)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    // Dying quietly on a closed pipe (e.g. | head) beats a panic.
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => other.context("writing to stdout"),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("TDSHAP_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .with_context(|| format!("TDSHAP_THREADS={raw:?} is not a worker count"))?;
    if threads == 0 {
        bail!("TDSHAP_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("installing the global worker pool")?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::init();
    configure_threads()?;
    match Cli::parse().command {
        Command::Cleanse { config, output_dir } => {
            let config = load_config(&config, output_dir)?;
            let report: CleansingReport<f64> = run_experiment(&config)?;
            print_json(&report)
        }
        Command::Value { config, output_dir } => {
            let config = load_config(&config, output_dir)?;
            let report: ValuationReport<f64> = run_valuation(&config)?;
            print_json(&report)
        }
        Command::Oracle { config, output_dir } => {
            let mut config = load_config(&config, output_dir)?;
            config.method = MethodConfig::Exact;
            let report: ValuationReport<f64> = run_valuation(&config)?;
            print_json(&report)
        }
        Command::SimulateBandit { config } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading scenario {}", config.display()))?;
            let scenario: SimScenario<f64> = serde_json::from_str(&text)
                .with_context(|| format!("parsing scenario {}", config.display()))?;
            print_json(&scenario.run()?)
        }
        Command::Theory {
            n,
            epsilon,
            metric,
            label_lo,
            label_hi,
            tree_leaf,
        } => {
            let label_range = label_lo.zip(label_hi);
            let report = TheoryReport::compute(n, epsilon, metric, label_range, tree_leaf)?;
            print_json(&report)
        }
    }
}
