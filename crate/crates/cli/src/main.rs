//! `opspace`: batch front end for the operator-space norm engine.
//!
//! Exit codes: 0 when every assertion holds, 2 on a numerical assertion
//! failure, 3 on bad input.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{InputError, RunConfig};
use report::{Format, Report};

#[derive(Parser, Debug)]
#[command(name = "opspace", version, about = "Norms, summing constants and cb-distances of small operator spaces")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Every flag can also be set through the environment as `OPSPACE_<FLAG>`.
#[derive(Args, Debug)]
struct Global {
    /// Model name (row, column, oh, clifford) or a presentation JSON file.
    #[arg(long, global = true, env = "OPSPACE_SPACE")]
    space: Option<String>,
    /// Model dimension; the largest n for model-table.
    #[arg(long, global = true, env = "OPSPACE_N")]
    n: Option<usize>,
    /// Tuple length for the lower-bound search (defaults to the dimension).
    #[arg(long, global = true, env = "OPSPACE_K")]
    k: Option<usize>,
    #[arg(long, global = true, env = "OPSPACE_RESTARTS")]
    restarts: Option<usize>,
    #[arg(long, global = true, env = "OPSPACE_SEED")]
    seed: Option<u64>,
    /// Absolute tolerance for sandwich and closed-form comparisons.
    #[arg(long, global = true, env = "OPSPACE_TOL", default_value_t = 1e-6)]
    tol: f64,
    /// Highest amplification level for cb lower bounds.
    #[arg(long, global = true, env = "OPSPACE_LEVEL", default_value_t = 2)]
    level: usize,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, env = "OPSPACE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "OPSPACE_FORMAT", value_enum, default_value_t = Format::Pretty)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lower and certified upper (2,oh)-summing bounds on the model spaces, n = 2..=--n.
    ModelTable,
    /// min_norm of a tuple (the canonical basis unless --tuple is given).
    Minnorm {
        /// JSON file with {"coeffs": {"re": [[..]], "im": [[..]]}}, one row per element.
        #[arg(long, env = "OPSPACE_TUPLE")]
        tuple: Option<String>,
    },
    /// Sandwich on the (2,oh)-summing norm of the identity of --space.
    Pi2oh,
    /// Clifford span identities, ratio probe and summing-norm sandwich.
    Clifford {
        #[arg(long, env = "OPSPACE_SAMPLES", default_value_t = 10_000)]
        samples: usize,
    },
    /// Factorization through OH_n; with --to, a bound on the distance between two spaces.
    Distance {
        #[arg(long, env = "OPSPACE_TO")]
        to: Option<String>,
    },
    /// Completely bounded projection from the ambient matrix space onto --space.
    Project,
}

fn run(cli: &Cli) -> Result<Report> {
    let g = &cli.global;
    if !(g.tol.is_finite() && g.tol >= 0.0) {
        return Err(InputError("--tol must be a nonnegative number".into()).into());
    }
    let cfg = RunConfig {
        space: g.space.clone(),
        n: g.n,
        k: g.k,
        restarts: g.restarts,
        seed: g.seed,
        tol: g.tol,
        level: g.level,
    };
    if cfg.restarts == Some(0) {
        return Err(InputError("--restarts must be at least 1".into()).into());
    }
    match &cli.command {
        Command::ModelTable => commands::model_table(&cfg),
        Command::Minnorm { tuple } => commands::minnorm(&cfg, tuple.as_deref()),
        Command::Pi2oh => commands::pi2oh(&cfg),
        Command::Clifford { samples } => commands::clifford(&cfg, *samples),
        Command::Distance { to } => commands::distance(&cfg, to.as_deref()),
        Command::Project => commands::project(&cfg),
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    use opspace_core::Error as E;
    if err.downcast_ref::<InputError>().is_some() {
        return 3;
    }
    match err.downcast_ref::<E>() {
        Some(E::NoCertificate(_) | E::Singular(_) | E::DegenerateForm { .. }) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(exit_code_for(&e));
        }
    };
    let text = match report.render(cli.global.format) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(3);
        }
    };
    match &cli.global.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(3);
            }
        }
        None => print!("{text}"),
    }
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        for f in &report.failures {
            eprintln!("assertion failed: {f}");
        }
        ExitCode::from(2)
    }
}
