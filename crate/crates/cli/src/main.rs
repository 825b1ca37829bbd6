use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use pq_cli::config::{ExperimentConfig, OutputFormat, Overrides};
use pq_cli::report::{emit_report, format_estimate};
use pq_cli::runner::{quantify, run_experiment, simulate, QuantifyArgs, SimulateArgs};
use pq_cli::CliError;
use pq_core::binning::DEFAULT_N_BINS;
use pq_core::interval::Method;
use pq_core::seed::derive_seed;

/// Class-prevalence estimation with calibrated uncertainty.
#[derive(Parser)]
#[command(name = "pq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate Gaussian pools, train the classifier, and write labeled
    /// score files.
    Simulate(SimulateCli),
    /// Run a full evaluation experiment over the artificial-prevalence
    /// suite.
    Run(RunCli),
    /// Summarize a results file into tables and plot data.
    Report(ReportCli),
    /// One-shot prevalence estimate from a validation and a test score file.
    Quantify(QuantifyCli),
}

#[derive(Args)]
struct SimulateCli {
    /// Positive-class mean of the unit-variance Gaussian design.
    #[arg(long, default_value_t = 1.0)]
    mean_pos: f64,
    #[arg(long, default_value_t = 10_000)]
    train_size: usize,
    #[arg(long, default_value_t = 0.9)]
    train_prevalence: f64,
    #[arg(long, default_value_t = 1000)]
    val_size: usize,
    #[arg(long, default_value_t = 0.5)]
    val_prevalence: f64,
    #[arg(long, default_value_t = 10_000)]
    pool_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pool_prevalence: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunCli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Method to run (repeatable).
    #[arg(long = "method")]
    methods: Vec<String>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
}

#[derive(Args)]
struct ReportCli {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: OutputFormat,
    /// Also write SVG bar charts of the three metrics.
    #[arg(long)]
    charts: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct QuantifyCli {
    /// Labeled validation score file (score,label per line).
    #[arg(long)]
    validation: PathBuf,
    /// Unlabeled test score file (score per line).
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "pq")]
    method: String,
    #[arg(long, default_value_t = DEFAULT_N_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 0.5)]
    mass: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Skip the first line of both files.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: OutputFormat,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse()
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            if e.use_stderr() {
                e.print().ok();
                std::process::exit(1);
            }
            e.print().ok();
            std::process::exit(0);
        }
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let outcome = simulate(&SimulateArgs {
                mean_pos: args.mean_pos,
                train_size: args.train_size,
                train_prevalence: args.train_prevalence,
                validation_size: args.val_size,
                validation_prevalence: args.val_prevalence,
                pool_size: args.pool_size,
                pool_prevalence: args.pool_prevalence,
                seed: args.seed,
                out_dir: args.out,
            })?;
            println!(
                "wrote {} and {} (pool AUC {:.3})",
                outcome.validation_path.display(),
                outcome.pool_path.display(),
                outcome.pool_auc
            );
            Ok(())
        }
        Command::Run(args) => {
            let overrides = Overrides {
                seed: args.seed,
                methods: args.methods,
                bins: args.bins,
                mass: args.mass,
                out: args.out,
                workers: args.workers,
                format: args.format,
            };
            let config = ExperimentConfig::load(args.config.as_deref(), &overrides)?;
            let outcome = run_experiment(&config)?;
            println!(
                "ran {} cases ({} resumed, {} aborted); results in {}",
                outcome.cases_run,
                outcome.cases_skipped,
                outcome.cases_aborted,
                outcome.results_path.display()
            );
            println!(
                "summary: {} and {}",
                outcome.summary.csv.display(),
                outcome.summary.json.display()
            );
            Ok(())
        }
        Command::Report(args) => {
            let (report, paths) = emit_report(
                &args.results,
                &args.out,
                args.format,
                args.charts,
                1000,
                derive_seed(args.seed, 3),
            )?;
            println!(
                "{} groups summarized into {}",
                report.groups.len(),
                paths.csv.display()
            );
            for chart in paths.charts {
                println!("chart: {}", chart.display());
            }
            Ok(())
        }
        Command::Quantify(args) => {
            let method = args
                .method
                .parse::<Method>()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let estimate = quantify(&QuantifyArgs {
                validation_path: args.validation,
                test_path: args.test,
                method,
                n_bins: args.bins,
                mass: args.mass,
                seed: args.seed,
                header: args.header,
                sampler: Default::default(),
                bootstrap: Default::default(),
            })?;
            println!("{}", format_estimate(&estimate, args.format));
            Ok(())
        }
    }
}
