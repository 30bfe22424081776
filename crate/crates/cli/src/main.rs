use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wnl_cli::{load_str, run, Backend, CliError, Command};
use wnl_core::par::{set_mode, ExecMode};

/// Exact checks of skew-symmetry and the Jacobi identity for weakly nonlocal
/// Poisson brackets.
///
/// Exit codes: 0 pass, 1 fail, 2 usage or input error, 3 internal
/// inconsistency (disagreeing backends, unexplained residuals).
#[derive(Parser)]
#[command(name = "wnl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Also write a machine-readable report to PATH.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Run on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check that P* = -P.
    Skew { file: PathBuf },
    /// Check the Jacobi identity.
    Jacobi {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendArg::All)]
        backend: BackendArg,
    },
    /// Print the geometric conditions of a hydrodynamic-type operator.
    Conditions {
        file: PathBuf,
        /// Skip checking that backend residuals follow from the conditions.
        #[arg(long)]
        no_verify: bool,
    },
    /// Run all backends and the geometric oracle and cross-check them.
    Compare {
        file: PathBuf,
        /// Also reduce each backend's residuals modulo every other backend's.
        #[arg(long)]
        pairwise: bool,
    },
    /// Print the formal adjoint as an operator document.
    Adjoint { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Dist,
    /// Schouten bracket [P, P].
    #[value(alias = "schouten")]
    Op,
    Pva,
    All,
}

fn read(path: &Path) -> Result<String, CliError> {
    let mut s = String::new();
    let res = if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut s).map(|_| ())
    } else {
        std::fs::read_to_string(path).map(|t| s = t)
    };
    res.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(s)
}

fn main_inner(cli: Cli) -> Result<i32, CliError> {
    if cli.sequential {
        set_mode(ExecMode::Sequential);
    }
    let (file, cmd) = match cli.command {
        Cmd::Skew { file } => (file, Command::Skew),
        Cmd::Jacobi { file, backend } => {
            let backend = match backend {
                BackendArg::Dist => Backend::Dist,
                BackendArg::Op => Backend::Op,
                BackendArg::Pva => Backend::Pva,
                BackendArg::All => Backend::All,
            };
            (file, Command::Jacobi { backend })
        }
        Cmd::Conditions { file, no_verify } => (file, Command::Conditions { verify: !no_verify }),
        Cmd::Compare { file, pairwise } => (file, Command::Compare { pairwise }),
        Cmd::Adjoint { file } => (file, Command::Adjoint),
    };
    let loaded = load_str(&read(&file)?)?;
    let report = run(&cmd, &loaded)?;
    print!("{}", report.text());
    if let Some(path) = &cli.json {
        std::fs::write(path, report.json()).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
