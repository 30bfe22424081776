//! Command-line front end: operator documents, the coefficient grammar and
//! the checks behind each subcommand.

pub mod doc;
mod error;
pub mod expr;
pub mod run;

pub use doc::{load_str, to_doc, Loaded, Mode, OperatorDoc};
pub use error::CliError;
pub use expr::parse_expr;
pub use run::{run, Backend, Command, Report, Verdict};
