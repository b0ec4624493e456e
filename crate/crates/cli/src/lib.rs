//! Command-line harness for the log-polar MNIST experiments. The binary is a
//! thin wrapper over [`commands::main_with`]; the report and band logic is
//! public so test harnesses can reuse it.

pub mod commands;
pub mod error;
pub mod fetch;
pub mod report;
pub mod run;
pub mod settings;

pub use commands::{main_with, Cli};
pub use error::{exit, CliError};
