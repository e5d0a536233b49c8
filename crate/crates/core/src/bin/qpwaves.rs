//! Command-line runner for the experiments in `qpwaves::experiment`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qpwaves::experiment::{run, Experiment, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "qpwaves", version, about = "Quasi-periodic traveling water waves: experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $QPWAVES_OUT_DIR/<experiment> or out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Time-integrate the water-wave system and report conservation.
    Evolve(Common),
    /// Compare the Dirichlet-Neumann expansion with harmonic oracles.
    DnoTest(Common),
    /// Enumerate n-wave resonances of the dispersion law.
    Resonances(Common),
    /// Tabulate the Benjamin-Feir family.
    BfFamily(Common),
    /// Twist matrix, its determinant and the linear frequencies.
    Twist(Common),
    /// Zero- and second-order Melnikov checks with reduction radii.
    Melnikov(Common),
    /// Monte Carlo estimate of the non-resonant action fraction.
    Measure(Common),
    /// Newton continuation of a quasi-periodic traveling wave.
    SolveQp(Common),
    /// Spectrum of the linearized operator and its diagonal fit.
    LinopSpectrum(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let (exp, c) = match cli.command {
        Command::Evolve(c) => (Experiment::Evolve, c),
        Command::DnoTest(c) => (Experiment::DnoTest, c),
        Command::Resonances(c) => (Experiment::Resonances, c),
        Command::BfFamily(c) => (Experiment::BfFamily, c),
        Command::Twist(c) => (Experiment::Twist, c),
        Command::Melnikov(c) => (Experiment::Melnikov, c),
        Command::Measure(c) => (Experiment::Measure, c),
        Command::SolveQp(c) => (Experiment::SolveQp, c),
        Command::LinopSpectrum(c) => (Experiment::LinopSpectrum, c),
    };
    ExitCode::from(run(exp, &c.config, c.out.as_deref()) as u8)
}
