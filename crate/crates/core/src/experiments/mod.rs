//! Experiment harness: baselines on plain and log-polar MNIST, rotation x
//! scale accuracy sweeps on the frozen baselines, their difference map, and
//! the log-polar resolution (compression) sweep.

mod compression;
mod export;
mod manifest;
mod sweep;

pub use compression::{compression_point, compression_sweep, dedup_grids, default_grids, CompressionPoint, Grid};
pub use export::{
    compression_csv, diff_csv, diff_pgm, matrix_csv, matrix_pgm, parse_compression_csv, parse_matrix_csv, write_matrix,
    write_new_file,
};
pub use manifest::{file_checksums, RunManifest, ROTATION_CONVENTION};
pub use sweep::{
    diff_map, evaluate_cell, run_sweep, run_sweep_with_hook, AccuracyMatrix, Cell, DiffMap, NoHook, PipelineHook,
    Stage, SweepSpec,
};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::imageops::{Image, ImageError, InterpMode};
use crate::logpolar::{make_grid, to_logpolar, to_logpolar_batch, LogPolarConfig, LogPolarError, SampleGrid};
use crate::mnist::{load_split, Dataset, IdxError, Split};
use crate::nn::{train_with, Architecture, EpochReport, Network, NnError, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("sweep grids differ: {0}")]
    GridMismatch(String),
    #[error("invalid sweep spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    LogPolar(#[from] LogPolarError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Data(#[from] IdxError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Which representation the classifier sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Euclidean,
    #[serde(rename = "logpolar")]
    LogPolar,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Euclidean => "euclidean",
            Variant::LogPolar => "logpolar",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Variant::Euclidean),
            "logpolar" | "log-polar" => Ok(Variant::LogPolar),
            other => Err(format!("unknown variant {other:?} (expected euclidean or logpolar)")),
        }
    }
}

/// The pre-filter between the (optional) Euclidean transforms and the CNN.
#[derive(Clone, Debug)]
pub enum Preprocess {
    Identity,
    LogPolar { grid: SampleGrid, mode: InterpMode },
}

impl Preprocess {
    pub fn for_variant(variant: Variant, cfg: &LogPolarConfig, mode: InterpMode) -> Result<Self, LogPolarError> {
        Ok(match variant {
            Variant::Euclidean => Preprocess::Identity,
            Variant::LogPolar => Preprocess::LogPolar {
                grid: make_grid(cfg)?,
                mode,
            },
        })
    }

    pub fn variant(&self) -> Variant {
        match self {
            Preprocess::Identity => Variant::Euclidean,
            Preprocess::LogPolar { .. } => Variant::LogPolar,
        }
    }

    /// Output `(width, height)` for a `src_w x src_h` source.
    pub fn output_dims(&self, src_w: usize, src_h: usize) -> (usize, usize) {
        match self {
            Preprocess::Identity => (src_w, src_h),
            Preprocess::LogPolar { grid, .. } => (grid.n_theta(), grid.n_rho()),
        }
    }

    /// Tag stored in weight files so weights are only reused with the
    /// representation they were trained on.
    pub fn tag(&self) -> String {
        match self {
            Preprocess::Identity => "euclidean".to_string(),
            Preprocess::LogPolar { grid, mode } => {
                let c = grid.config();
                format!(
                    "logpolar:n_theta={},n_rho={},r_min={},r_max={},theta_zero={},center={},{},interp={}",
                    c.n_theta,
                    c.n_rho,
                    c.r_min,
                    c.r_max,
                    c.theta_zero,
                    c.center.0,
                    c.center.1,
                    match mode {
                        InterpMode::Nearest => "nearest",
                        InterpMode::Bilinear => "bilinear",
                    }
                )
            }
        }
    }

    pub fn apply(&self, img: &Image) -> Image {
        match self {
            Preprocess::Identity => img.clone(),
            Preprocess::LogPolar { grid, mode } => to_logpolar(img, grid, *mode),
        }
    }

    pub fn apply_dataset(&self, data: &Dataset, exec: Exec) -> Dataset {
        match self {
            Preprocess::Identity => data.clone(),
            Preprocess::LogPolar { grid, mode } => Dataset {
                images: to_logpolar_batch(&data.images, grid, *mode, exec),
                labels: data.labels.clone(),
                split: data.split,
            },
        }
    }

    /// The classifier architecture for this representation of `src_w x src_h` images.
    pub fn architecture(&self, src_w: usize, src_h: usize) -> Architecture {
        let (w, h) = self.output_dims(src_w, src_h);
        Architecture::digit_cnn(h, w, self.tag())
    }
}

/// Loads the canonical train and test splits from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset), IdxError> {
    Ok((load_split(dir, Split::Train)?, load_split(dir, Split::Test)?))
}

/// Trains a fresh CNN on `train` seen through `pre`, scoring `test` after
/// every epoch.
pub fn run_baseline(
    pre: &Preprocess,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochReport),
) -> Result<(Network<f32>, TrainReport), ExperimentError> {
    let (w, h) = train.dims().ok_or(NnError::EmptyDataset)?;
    let train_in = pre.apply_dataset(train, exec);
    let test_in = pre.apply_dataset(test, exec);
    let mut net = Network::<f32>::new(pre.architecture(w, h), cfg.rng_seed)?;
    let report = train_with(&mut net, &train_in, Some(&test_in), cfg, exec, on_epoch)?;
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_round_trips_through_strings() {
        for v in [Variant::Euclidean, Variant::LogPolar] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("polar".parse::<Variant>().is_err());
    }

    #[test]
    fn preprocess_dims_and_tags() {
        let cfg = LogPolarConfig::mnist(16, 10);
        let lp = Preprocess::for_variant(Variant::LogPolar, &cfg, InterpMode::Bilinear).unwrap();
        assert_eq!(lp.output_dims(28, 28), (16, 10));
        assert_eq!(lp.architecture(28, 28).input, [1, 10, 16]);
        assert!(lp.tag().starts_with("logpolar:n_theta=16,n_rho=10"));
        let eu = Preprocess::for_variant(Variant::Euclidean, &cfg, InterpMode::Bilinear).unwrap();
        assert_eq!(eu.tag(), "euclidean");
        assert_eq!(eu.architecture(28, 28).input, [1, 28, 28]);
    }
}
