use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dadmm::experiment::{self, Instance, ReplicateSeeds};
use dadmm::{Error, RunConfig};

#[derive(Parser)]
#[command(
    name = "dadmm",
    version,
    about = "Asynchronous distributed consensus ADMM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all replicates and write traces, summary, parameters and estimates.
    Run(Common),
    /// Repeat the run for each value of one configuration key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Key to vary, e.g. `rho`, `max_staleness` or `frequency`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Print the per-node step-size feasibility table.
    CheckParams(Common),
    /// Print the first replicate's network (or write it to `--out`).
    GenGraph(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset: paper-localization or sync-check.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Override any key, e.g. `--set max_iter=2000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::UnsupportedPrior(_)
            | Error::NoSurrogate => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.preset {
            Some(name) => RunConfig::preset(name)?,
            None => RunConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("expected KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let result = experiment::run_experiment(&cfg)?;
            result.write(&cfg.out)?;
            print!("{}", result.summary_csv()?);
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let cfg = common.resolve()?;
            for v in &values {
                cfg.clone().set(&param, v)?;
            }
            let results = experiment::sweep(&cfg, &param, &values)?;
            for r in &results {
                r.write(&r.config.out)?;
            }
            let table = experiment::sweep_csv(&param, &values, &results)?;
            fs::create_dir_all(&cfg.out).map_err(runtime)?;
            fs::write(cfg.out.join("sweep.csv"), &table).map_err(runtime)?;
            print!("{table}");
        }
        Command::CheckParams(common) => {
            let cfg = common.resolve()?;
            let report = experiment::check_params_report(&cfg)?;
            print!("{}", experiment::report_csv(&report));
            let infeasible = report.iter().filter(|r| !r.feasible).count();
            if infeasible > 0 {
                eprintln!("warning: {infeasible} node(s) violate the step-size bound");
            }
        }
        Command::GenGraph(common) => {
            let out = common.out.clone();
            let cfg = common.resolve()?;
            let seeds = ReplicateSeeds::derive(cfg.seed, 0);
            let instance = Instance::generate(&cfg, seeds.network)?;
            let text = instance.to_text();
            match out {
                Some(path) => fs::write(&path, text).map_err(runtime)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
