use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mvstab::{compare_files, run, ExperimentConfig, ExperimentKind, RunManifest};

#[derive(Parser)]
#[command(
    name = "mvstab",
    version,
    about = "Feedback stabilization experiments for McKean-Vlasov dynamics on the circle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary densities (one profile per sweep point).
    Stationary(RunArgs),
    /// Spectrum of the linearization.
    Spectrum(RunArgs),
    /// Kuramoto spectral gap over a coupling grid.
    GapSweep(RunArgs),
    /// Ground-state transform cross-check of the spectrum.
    SchrodingerCheck(RunArgs),
    /// Hautus stabilizability test for the chosen control shapes.
    Hautus(RunArgs),
    /// Riccati feedback synthesis.
    Synthesize(RunArgs),
    /// Controlled and uncontrolled nonlinear runs.
    Simulate(RunArgs),
    /// log10 |y(t)| over a parameter grid, with and without feedback.
    HeatmapSweep(RunArgs),
    /// Compare two trajectory CSV files.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Dotted-path override such as `model.sigma=0.4`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Start of the rate-fitting window (default: the tenth of the span on
    /// which both runs are resolved above integration noise).
    #[arg(long, requires = "end")]
    start: Option<f64>,
    #[arg(long, requires = "start")]
    end: Option<f64>,
}

fn kind_of(cmd: &Command) -> Option<ExperimentKind> {
    Some(match cmd {
        Command::Stationary(_) => ExperimentKind::Stationary,
        Command::Spectrum(_) => ExperimentKind::Spectrum,
        Command::GapSweep(_) => ExperimentKind::GapSweep,
        Command::SchrodingerCheck(_) => ExperimentKind::SchrodingerCheck,
        Command::Hautus(_) => ExperimentKind::Hautus,
        Command::Synthesize(_) => ExperimentKind::Synthesize,
        Command::Simulate(_) => ExperimentKind::Simulate,
        Command::HeatmapSweep(_) => ExperimentKind::HeatmapSweep,
        Command::Compare(_) => return None,
    })
}

fn execute(cli: Cli) -> anyhow::Result<RunManifest> {
    let kind = kind_of(&cli.command);
    match cli.command {
        Command::Compare(c) => compare_files(&c.a, &c.b, &c.out, c.start.zip(c.end)),
        Command::Stationary(a)
        | Command::Spectrum(a)
        | Command::GapSweep(a)
        | Command::SchrodingerCheck(a)
        | Command::Hautus(a)
        | Command::Synthesize(a)
        | Command::Simulate(a)
        | Command::HeatmapSweep(a) => {
            let kind = kind.expect("experiment subcommand");
            let mut cfg = ExperimentConfig::load(&a.config, &a.overrides)?;
            match cfg.kind {
                Some(k) if k != kind => anyhow::bail!("config describes a {k} experiment, not {kind}"),
                _ => cfg.kind = Some(kind),
            }
            let out = a
                .out
                .or_else(|| cfg.output.clone())
                .context("no output directory (use --out or set `output`)")?;
            run(&cfg, &out, a.threads)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(m) if m.pass => {
            println!("{}: {} outputs, all assertions passed", m.kind, m.outputs.len());
            ExitCode::SUCCESS
        }
        Ok(m) => {
            for a in m.failed() {
                eprintln!("FAILED {}: {}", a.name, a.detail);
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
