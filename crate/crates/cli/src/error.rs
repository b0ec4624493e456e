use std::path::{Path, PathBuf};

use logpolar_core::experiments::ExperimentError;
use logpolar_core::logpolar::LogPolarError;
use logpolar_core::mnist::IdxError;
use logpolar_core::nn::NnError;
use logpolar_core::pgm::PgmError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("checksum mismatch for {file}: expected {expected}, found {actual}")]
    ChecksumMismatch {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("could not fetch {url}: {reason}")]
    Network { url: String, reason: String },
    #[error("no result files (sweep-*.csv, compression.csv, report.csv) under {0}")]
    NoResults(PathBuf),
    #[error(transparent)]
    Data(#[from] IdxError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    LogPolar(#[from] LogPolarError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        fn nn(e: &NnError) -> i32 {
            match e {
                NnError::Divergence { .. } => exit::DIVERGENCE,
                NnError::BadConfig(_) | NnError::InvalidArchitecture(_) => exit::USAGE,
                _ => exit::DATA,
            }
        }
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::LogPolar(LogPolarError::BadRadius { .. } | LogPolarError::BadGridSize { .. }) => exit::USAGE,
            CliError::Nn(e) => nn(e),
            CliError::Experiment(ExperimentError::Nn(e)) => nn(e),
            CliError::Experiment(ExperimentError::BadSpec(_)) => exit::USAGE,
            CliError::Experiment(ExperimentError::LogPolar(
                LogPolarError::BadRadius { .. } | LogPolarError::BadGridSize { .. },
            )) => exit::USAGE,
            _ => exit::DATA,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), exit::USAGE);
        assert_eq!(CliError::NoResults("d".into()).exit_code(), exit::DATA);
        let div = NnError::Divergence {
            epoch: 1,
            batch: 2,
            loss: f64::NAN,
        };
        assert_eq!(CliError::Nn(div).exit_code(), exit::DIVERGENCE);
        let div = ExperimentError::Nn(NnError::Divergence {
            epoch: 1,
            batch: 2,
            loss: f64::INFINITY,
        });
        assert_eq!(CliError::Experiment(div).exit_code(), exit::DIVERGENCE);
        assert_eq!(CliError::Nn(NnError::BadConfig("e".into())).exit_code(), exit::USAGE);
        assert_eq!(CliError::Nn(NnError::ArchMismatch("a".into())).exit_code(), exit::DATA);
    }
}
