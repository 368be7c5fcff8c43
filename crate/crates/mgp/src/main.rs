use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgp::commands::{cmd_benchmark, cmd_impute, cmd_report};
use mgp::config::{ExperimentConfig, Hyper, Method, DEFAULT_OUTPUT_ROOT, OUTPUT_ROOT_ENV};
use mgp::Error;

#[derive(Parser)]
#[command(
    name = "mgp",
    version,
    about = "Gaussian-process imputation of missing values"
)]
struct Cli {
    /// Output root; every command writes into a fresh timestamped directory below it.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = DEFAULT_OUTPUT_ROOT)]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill the missing cells of a CSV file.
    Impute {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "mgp")]
        method: Method,
        /// Remove this fraction of observed cells first and score their recovery.
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Run the method × rate × seed grid; finished cells are reused.
    Benchmark {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = Method::ALL)]
        method: Vec<Method>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4])]
        rate: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0.7)]
        train_frac: f64,
        /// Worker threads; each cell runs on one thread.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Render tables and average ranks from a records.jsonl dump.
    Report { records: PathBuf },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON column schema; without it every column is continuous.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long, default_value_t = Hyper::default().inducing)]
    inducing: usize,
    #[arg(long, default_value_t = Hyper::default().batch)]
    batch: usize,
    #[arg(long, default_value_t = Hyper::default().lr)]
    lr: f64,
    /// Default: 2000 below 2000 rows, 10000 otherwise.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = Hyper::default().samples)]
    samples: usize,
    #[arg(long, default_value_t = Hyper::default().knn_k)]
    knn_k: usize,
    #[arg(long, default_value_t = Hyper::default().mice_rounds)]
    mice_rounds: usize,
}

impl HyperArgs {
    fn hyper(&self) -> Hyper {
        Hyper {
            inducing: self.inducing,
            batch: self.batch,
            lr: self.lr,
            iterations: self.iters.unwrap_or(0),
            samples: self.samples,
            knn_k: self.knn_k,
            mice_rounds: self.mice_rounds,
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Impute {
            data,
            method,
            rate,
            seed,
            hyper,
        } => {
            let cfg = ExperimentConfig {
                dataset: data.dataset,
                schema: data.schema,
                methods: vec![method],
                rates: vec![rate],
                seeds: vec![seed],
                train_frac: 0.7,
                hyper: hyper.hyper(),
                out: cli.out,
                jobs: 1,
            };
            let out = cmd_impute(cfg, hyper.iters)?;
            println!("{}", out.run_dir.join("completed.csv").display());
            if let Some(r) = out.rmse {
                println!("rmse {r:.6}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Benchmark {
            data,
            method,
            rate,
            seeds,
            train_frac,
            jobs,
            hyper,
        } => {
            let cfg = ExperimentConfig {
                dataset: data.dataset,
                schema: data.schema,
                methods: method,
                rates: rate,
                seeds,
                train_frac,
                hyper: hyper.hyper(),
                out: cli.out,
                jobs,
            };
            let run = cmd_benchmark(cfg, hyper.iters)?;
            print!("{}", mgp::report::render_tables(&run.outcome.table));
            println!(
                "{} records ({} reused) in {}",
                run.outcome.table.records.len(),
                run.outcome.reused,
                run.run_dir.display()
            );
            for f in &run.outcome.failures {
                eprintln!("failed {}: {}", f.spec.label(), f.error);
            }
            Ok(if run.outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Report { records } => {
            let rep = cmd_report(&records, &cli.out)?;
            print!("{}", rep.text);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
