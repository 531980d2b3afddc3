//! `fluctwork`: check work-fluctuation identities on JSON problem documents.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fluctwork::io::{run, Options, EXIT_INPUT};

#[derive(Parser)]
#[command(name = "fluctwork", version, about = "Work fluctuations under thermal operations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Inverse temperature (overrides the document).
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Absolute tolerance of every check.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<i64>,
    /// Erasure failure probability.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Sweep the Landauer tradeoff instead of the symmetric point.
    #[arg(long, global = true)]
    sweep: bool,
    /// Print the command's table as CSV instead of the JSON report.
    #[arg(long, global = true)]
    csv: bool,
    /// Leave the timestamp out of the report.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Write output here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Read the problem document from a file instead of standard input.
    #[arg(long = "in", global = true, value_name = "PATH")]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Gibbs-stochastic and row-normalization check of a kernel.
    Validate,
    /// Backward kernel and its validation.
    Backward,
    /// Permutation realization on a finite bath.
    Realize,
    /// Second-law equality, Jarzynski identities, moments and Crooks ratios.
    Identities,
    /// Monte Carlo estimates of the identities.
    Sample,
    /// Thermo-majorization curves.
    Curve,
    /// Linear-programming feasibility of a transition.
    Feasible,
    /// Largest expected work over admissible kernels.
    OptimalWork,
    /// Landauer erasure tradeoff.
    Landauer,
    /// Quantum identities for an energy-conserving unitary.
    Quantum,
    /// Bundled demos: `landauer` or `curves`.
    Demo {
        #[arg(default_value = "landauer")]
        name: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Backward => "backward",
            Command::Realize => "realize",
            Command::Identities => "identities",
            Command::Sample => "sample",
            Command::Curve => "curve",
            Command::Feasible => "feasible",
            Command::OptimalWork => "optimal-work",
            Command::Landauer => "landauer",
            Command::Quantum => "quantum",
            Command::Demo { .. } => "demo",
        }
    }

    fn needs_document(&self) -> bool {
        !matches!(self, Command::Landauer | Command::Demo { .. })
    }
}

fn read_input(cli: &Cli) -> std::io::Result<Option<String>> {
    match &cli.common.input {
        Some(path) => std::fs::read_to_string(path).map(Some),
        None if cli.command.needs_document() => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(Some(s))
        }
        None => Ok(None),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let input = match read_input(&cli) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: cannot read input: {e}");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let c = &cli.common;
    let opts = Options {
        beta: c.beta,
        tol: c.tol,
        seed: c.seed,
        samples: c.samples,
        epsilon: c.epsilon,
        sweep: c.sweep,
        csv: c.csv,
        timestamp: !c.no_timestamp,
        demo: match &cli.command {
            Command::Demo { name } => Some(name.clone()),
            _ => None,
        },
    };
    let out = run(cli.command.name(), &opts, input.as_deref());
    if let Some(e) = &out.error {
        eprintln!("error: {e}");
    }
    if let Some(r) = &out.report {
        if !r.violations.is_empty() {
            eprintln!("violated: {}", r.violations.join(", "));
        }
    }
    let written = match &c.out {
        Some(path) => std::fs::write(path, &out.text),
        None => std::io::stdout().write_all(out.text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(EXIT_INPUT as u8);
    }
    ExitCode::from(out.exit_code as u8)
}
