//! Command-line runner: single experiments, seed grids and dataset dumps.
//!
//! Exit codes: 0 success, 1 usage or other errors, 2 invariant failure, 3 capability error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use oadm::harness::{average_trajectories, build_instance, run_experiment, ExperimentConfig, MetricSummary, ProblemKind};

#[derive(Parser, Debug)]
#[command(name = "oadm", version, about = "Batch and online ADM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one configuration and print its summary as JSON.
    Run(RunArgs),
    /// Run one configuration over several seeds in parallel.
    Grid(GridArgs),
    /// Write the generated dataset of a configuration.
    Dataset(DatasetArgs),
}

/// Flags layered over an optional key = value config file.
#[derive(Args, Debug)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    passes: Option<usize>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Per-round CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Seeds to run, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    /// Directory for the per-seed CSVs, summary.json and nnz_mean.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: PathBuf,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_kv(&text)?
            }
            None => ExperimentConfig::default(),
        };
        let flags: [(&str, Option<String>); 11] = [
            ("problem", self.problem.clone()),
            ("solver", self.solver.clone()),
            ("schedule", self.schedule.clone()),
            ("rho", self.rho.map(|v| v.to_string())),
            ("eta", self.eta.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("q", self.q.map(|v| v.to_string())),
            ("n", self.n.map(|v| v.to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("passes", self.passes.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for pair in &self.set {
            let Some((key, value)) = pair.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {pair:?}");
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(args: &RunArgs) -> anyhow::Result<()> {
    let mut cfg = args.config.resolve()?;
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    let output = run_experiment(&cfg)?;
    print_json(&output.summary)
}

fn grid(args: &GridArgs) -> anyhow::Result<()> {
    let base = args.config.resolve()?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    // Each cell owns its solver state and output file; the reduce below is sequential.
    let cells: Vec<oadm::Result<MetricSummary>> = args
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ExperimentConfig {
                seed,
                out: Some(args.out.join(format!("seed-{seed}.csv"))),
                ..base.clone()
            };
            run_experiment(&cfg).map(|o| o.summary)
        })
        .collect();
    let mut summaries = Vec::with_capacity(cells.len());
    for cell in cells {
        summaries.push(cell?);
    }
    let trajectories: Vec<Vec<usize>> = summaries.iter().map(|s| s.nnz.clone()).collect();
    let mean = average_trajectories(&trajectories)?;
    write_mean_nnz(&args.out.join("nnz_mean.csv"), &mean)?;
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summaries)?)?;
    print_json(&summaries)
}

fn write_mean_nnz(path: &Path, mean: &[f64]) -> anyhow::Result<()> {
    let mut text = String::from("t,nnz_mean\n");
    for (i, v) in mean.iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, v));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dataset(args: &DatasetArgs) -> anyhow::Result<()> {
    let cfg = args.config.resolve()?;
    if cfg.problem == ProblemKind::Lp {
        bail!("lp instances have no dataset");
    }
    let inst = build_instance(&cfg)?;
    let ds = inst.dataset.expect("data-backed problem");
    fs::write(&args.out, ds.to_text()).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<oadm::Error>() {
        Some(oadm::Error::Invariant(_)) => 2,
        Some(oadm::Error::Capability(_)) => 3,
        _ => 1,
    }
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
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Grid(a) => grid(a),
        Command::Dataset(a) => dataset(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
