//! `enclosure`: run an experiment config stage by stage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use enclosure::experiment::{ExperimentConfig, Pipeline, Runner, Stage};
use enclosure::Error;

#[derive(Parser, Debug)]
#[command(name = "enclosure", version, about = "Time-domain enclosure method experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stage to run when no subcommand is given.
    #[arg(long, value_enum, default_value_t = StageArg::All)]
    stage: StageArg,
    #[arg(long, global = true)]
    tau_min: Option<f64>,
    #[arg(long, global = true)]
    tau_max: Option<f64>,
    #[arg(long, global = true)]
    tau_count: Option<usize>,
    #[arg(long, value_enum, global = true)]
    pipeline: Option<PipelineArg>,
    /// Print the demo config and exit.
    #[arg(long)]
    print_demo: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// FDTD runs with and without the obstacle; writes record.bin and reference.bin.
    Simulate,
    /// Indicator CSVs from saved records and/or the semi-analytic model.
    Indicator,
    /// Distance and second-order limit reports from the indicator CSVs.
    Extract,
    /// Laplace-method oracle values; needs no record.
    Oracle,
    /// Curvature recovery from two shifted balls.
    Recover,
    /// Tangential trace checks of the reflected field.
    Reflectcheck,
    /// Direction sweep against the geometry.
    Probe,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum StageArg {
    All,
    Simulate,
    Indicator,
    Extract,
    Oracle,
    Recover,
    Reflectcheck,
    Probe,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PipelineArg {
    Fdtd,
    Semianalytic,
    Both,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::All => Stage::All,
            StageArg::Simulate => Stage::Simulate,
            StageArg::Indicator => Stage::Indicator,
            StageArg::Extract => Stage::Extract,
            StageArg::Oracle => Stage::Oracle,
            StageArg::Recover => Stage::Recover,
            StageArg::Reflectcheck => Stage::Reflectcheck,
            StageArg::Probe => Stage::Probe,
        }
    }
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Simulate => Stage::Simulate,
            Command::Indicator => Stage::Indicator,
            Command::Extract => Stage::Extract,
            Command::Oracle => Stage::Oracle,
            Command::Recover => Stage::Recover,
            Command::Reflectcheck => Stage::Reflectcheck,
            Command::Probe => Stage::Probe,
        }
    }
}

impl From<PipelineArg> for Pipeline {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Fdtd => Pipeline::Fdtd,
            PipelineArg::Semianalytic => Pipeline::Semianalytic,
            PipelineArg::Both => Pipeline::Both,
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("ENCLOSURE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, (Error, Option<PathBuf>)> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| (Error::Config("--config is required".into()), cli.out.clone()))?;
    let config = ExperimentConfig::load(&path).map_err(|e| (e, cli.out.clone()))?;
    let fallback_out = cli.out.clone().or_else(|| config.run.out.clone());
    let config = config
        .with_overrides(cli.tau_min, cli.tau_max, cli.tau_count, cli.pipeline.map(Into::into))
        .map_err(|e| (e, fallback_out.clone()))?;
    let runner = Runner::new(config, cli.out.clone());
    let stage = cli.command.map_or(cli.stage.into(), Into::into);
    runner.run(stage).map_err(|e| (e, Some(runner.out.clone())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_demo {
        print!("{}", enclosure::experiment::DEMO_CONFIG);
        return ExitCode::SUCCESS;
    }
    configure_threads();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err((e, out)) => {
            let text = Runner::error_block(&e, out.as_deref());
            eprintln!("{text}");
            ExitCode::from(2)
        }
    }
}
