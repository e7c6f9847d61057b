use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vortexlab::cli::{self, config::Experiment, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    SolveVortex,
    SolveCoupled,
    ScanTau,
    CheckIdentities,
    Stability,
    TransformU,
    SwDecouple,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::SolveVortex => Experiment::SolveVortex,
            ExperimentArg::SolveCoupled => Experiment::SolveCoupled,
            ExperimentArg::ScanTau => Experiment::ScanTau,
            ExperimentArg::CheckIdentities => Experiment::CheckIdentities,
            ExperimentArg::Stability => Experiment::Stability,
            ExperimentArg::TransformU => Experiment::TransformU,
            ExperimentArg::SwDecouple => Experiment::SwDecouple,
        }
    }
}

/// Run a vortex-equation experiment and write report.json, trace.csv,
/// field grids and a checkpoint to the output directory.
///
/// Exit status: 0 on success, 2 on a non-existence verdict, 1 on errors.
#[derive(Debug, Parser)]
#[command(name = "vortexlab", version)]
struct Args {
    experiment: ExperimentArg,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides { seed: args.seed, out: args.out.clone() };
    let cfg = match cli::load_config(&args.config, Some(args.experiment.into())) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("vortexlab: {e}");
            return ExitCode::from(cli::EXIT_ERROR as u8);
        }
    };
    let outcome = cli::run(&cfg, &overrides);
    match outcome.report.get("error") {
        Some(err) => eprintln!("vortexlab: {}", err["message"].as_str().unwrap_or("error")),
        None => eprintln!("vortexlab: wrote {}", outcome.dir.join("report.json").display()),
    }
    ExitCode::from(outcome.exit_code as u8)
}
