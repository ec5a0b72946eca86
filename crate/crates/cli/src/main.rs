//! `sparsevar`: fit, tune and analyse structured-penalty VAR models from
//! CSV data.

mod commands;
mod error;
mod files;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sparsevar::benchmarks::Criterion;
use sparsevar::RefitMode;

use crate::error::{CliError, CliResult};

/// Environment variable that overrides `--threads`.
const THREADS_ENV: &str = "SPARSEVAR_THREADS";

#[derive(Parser)]
#[command(name = "sparsevar", version, about = "Structured-penalty vector autoregression")]
struct Cli {
    /// Worker threads for the cross-validation grid (default: all cores).
    /// SPARSEVAR_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum IcArg {
    Aic,
    Bic,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rls,
    Wls,
    Ifgls,
}

#[derive(Subcommand)]
enum Command {
    /// Select the penalty by rolling cross-validation and evaluate it out of sample.
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit at fixed penalties on the full sample.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated penalty values.
        #[arg(long)]
        lambda: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast from a stored model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n_ahead: usize,
        /// Future exogenous values, one row per step.
        #[arg(long)]
        newx: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a Gaussian VAR.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Orthogonalized impulse responses of a stored model.
    Irf {
        #[arg(long)]
        model: PathBuf,
        /// Series label or zero-based index.
        #[arg(long)]
        shock: String,
        /// Shock size in the units of the data.
        #[arg(long, default_value_t = 1.0)]
        size: f64,
        #[arg(long)]
        periods: usize,
        /// Rescale the Cholesky factor to unit diagonal.
        #[arg(long)]
        unit_diagonal: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Least-squares VAR/VARX with lag orders chosen by an information criterion.
    Benchmark {
        #[arg(long)]
        data: PathBuf,
        /// Number of endogenous columns (default: all).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        pmax: usize,
        #[arg(long, default_value_t = 0)]
        smax: usize,
        #[arg(long, value_enum)]
        criterion: IcArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-estimate the support of a stored Basic VAR model.
    Refit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Coefficients at or below this magnitude are treated as zero.
        #[arg(long, default_value_t = 0.0)]
        eps1: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::usage(format!("{THREADS_ENV}='{v}' is not a positive integer"))),
        Err(_) => match flag {
            Some(0) => Err(CliError::usage("--threads must be positive")),
            other => Ok(other),
        },
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Cv { data, config, out } => commands::cv(&data, &config, &out),
        Command::Fit {
            data,
            config,
            lambda,
            out,
        } => commands::fit(&data, &config, &commands::parse_lambdas(&lambda)?, &out),
        Command::Predict {
            model,
            n_ahead,
            newx,
            out,
        } => commands::predict(&model, n_ahead, newx.as_deref(), out.as_deref()),
        Command::Simulate { spec, seed, t, out } => commands::simulate(&spec, seed, t, out.as_deref()),
        Command::Irf {
            model,
            shock,
            size,
            periods,
            unit_diagonal,
            out,
        } => commands::irf(&model, &shock, size, periods, unit_diagonal, out.as_deref()),
        Command::Benchmark {
            data,
            k,
            pmax,
            smax,
            criterion,
            out,
        } => {
            let c = match criterion {
                IcArg::Aic => Criterion::Aic,
                IcArg::Bic => Criterion::Bic,
            };
            commands::benchmark(&data, k, pmax, smax, c, out.as_deref())
        }
        Command::Refit {
            model,
            data,
            method,
            eps1,
            out,
        } => {
            let m = match method {
                MethodArg::Rls => RefitMode::Rls,
                MethodArg::Wls => RefitMode::Wls,
                MethodArg::Ifgls => RefitMode::Ifgls,
            };
            commands::refit(&model, &data, m, eps1, out.as_deref())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match thread_count(cli.threads)? {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::usage(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
