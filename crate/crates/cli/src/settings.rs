//! Effective parameters: command-line flags over `--config` file over
//! built-in defaults.

use std::path::{Path, PathBuf};

use logpolar_core::experiments::{default_grids, SweepSpec, Variant};
use logpolar_core::imageops::InterpMode;
use logpolar_core::logpolar::LogPolarConfig;
use logpolar_core::nn::{OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Keys accepted in a `--config` file; same names as the flags with
/// underscores. Lists may be given as arrays or comma-separated strings.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<String>,
    pub momentum: Option<f64>,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub n_theta: Option<usize>,
    pub n_rho: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub interp: Option<String>,
    pub rotations: Option<ListValue>,
    pub scales: Option<ListValue>,
    pub grids: Option<ListValue>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ListValue {
    Text(String),
    Numbers(Vec<f64>),
    Words(Vec<String>),
}

impl ListValue {
    fn text(&self) -> String {
        match self {
            ListValue::Text(s) => s.clone(),
            ListValue::Numbers(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            ListValue::Words(v) => v.join(","),
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Flag values as parsed; `None` means not given on the command line.
#[derive(Debug, Default, Clone)]
pub struct Flags {
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<String>,
    pub momentum: Option<f64>,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub n_theta: Option<usize>,
    pub n_rho: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub interp: Option<String>,
    pub rotations: Option<String>,
    pub scales: Option<String>,
    pub grids: Option<String>,
}

/// Fully resolved parameters, recorded verbatim in the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub variant: Option<Variant>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub n_theta: usize,
    pub n_rho: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub interp: String,
    pub rotations: Vec<f64>,
    pub scales: Vec<f64>,
    pub grids: Vec<(usize, usize)>,
}

fn usage<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("{what}: {e}"))
}

pub fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches('%').parse::<f64>().map_err(usage(what)))
        .collect()
}

/// Scales as ratios; values above 1 are read as percentages.
pub fn parse_scales(text: &str) -> Result<Vec<f64>, CliError> {
    Ok(parse_f64_list(text, "--scales")?
        .into_iter()
        .map(|s| if s > 1.0 { s / 100.0 } else { s })
        .collect())
}

/// Rotations in degrees, folded into `[0, 360)`.
pub fn parse_rotations(text: &str) -> Result<Vec<f64>, CliError> {
    Ok(parse_f64_list(text, "--rotations")?
        .into_iter()
        .map(|r| {
            let r = r.rem_euclid(360.0);
            if r >= 360.0 {
                0.0
            } else {
                r
            }
        })
        .collect())
}

/// `28x28,16x10`: `n_theta x n_rho` pairs.
pub fn parse_grids(text: &str) -> Result<Vec<(usize, usize)>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|g| {
            let (t, r) = g
                .split_once(['x', 'X'])
                .ok_or_else(|| CliError::Usage(format!("--grids: {g:?} is not THETAxRHO")))?;
            Ok((
                t.trim().parse().map_err(usage("--grids"))?,
                r.trim().parse().map_err(usage("--grids"))?,
            ))
        })
        .collect()
}

impl Settings {
    pub fn resolve(flags: &Flags, file: &FileConfig) -> Result<Self, CliError> {
        let defaults = TrainConfig::default();
        let variant = flags
            .variant
            .clone()
            .or_else(|| file.variant.clone())
            .map(|v| v.parse::<Variant>().map_err(CliError::Usage))
            .transpose()?;
        let optimizer = match flags.optimizer.clone().or_else(|| file.optimizer.clone()).as_deref() {
            None | Some("adam") => OptimizerKind::default(),
            Some("sgd") => OptimizerKind::Sgd {
                momentum: flags.momentum.or(file.momentum).unwrap_or(0.9),
            },
            Some(other) => return Err(CliError::Usage(format!("unknown optimizer {other:?} (adam or sgd)"))),
        };
        let interp = flags
            .interp
            .clone()
            .or_else(|| file.interp.clone())
            .unwrap_or_else(|| "bilinear".into());
        if interp != "bilinear" && interp != "nearest" {
            return Err(CliError::Usage(format!(
                "unknown interpolation {interp:?} (bilinear or nearest)"
            )));
        }
        let list =
            |flag: &Option<String>, cfg: &Option<ListValue>| flag.clone().or_else(|| cfg.as_ref().map(ListValue::text));
        let spec = SweepSpec::default_for(Variant::Euclidean);
        let settings = Settings {
            seed: flags.seed.or(file.seed).unwrap_or(defaults.rng_seed),
            variant,
            epochs: flags.epochs.or(file.epochs).unwrap_or(defaults.epochs),
            batch_size: flags.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
            learning_rate: flags
                .learning_rate
                .or(file.learning_rate)
                .unwrap_or(defaults.learning_rate),
            optimizer,
            train_subset: flags.train_subset.or(file.train_subset),
            test_subset: flags.test_subset.or(file.test_subset),
            n_theta: flags.n_theta.or(file.n_theta).unwrap_or(28),
            n_rho: flags.n_rho.or(file.n_rho).unwrap_or(28),
            r_min: flags
                .r_min
                .or(file.r_min)
                .unwrap_or(logpolar_core::logpolar::MNIST_R_MIN),
            r_max: flags
                .r_max
                .or(file.r_max)
                .unwrap_or(logpolar_core::logpolar::MNIST_R_MAX),
            interp,
            rotations: match list(&flags.rotations, &file.rotations) {
                Some(t) => parse_rotations(&t)?,
                None => spec.rotations,
            },
            scales: match list(&flags.scales, &file.scales) {
                Some(t) => parse_scales(&t)?,
                None => spec.scales,
            },
            grids: match list(&flags.grids, &file.grids) {
                Some(t) => parse_grids(&t)?,
                None => default_grids(),
            },
        };
        settings.train_config().validate()?;
        Ok(settings)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            rng_seed: self.seed,
        }
    }

    pub fn interp_mode(&self) -> InterpMode {
        if self.interp == "nearest" {
            InterpMode::Nearest
        } else {
            InterpMode::Bilinear
        }
    }

    /// Log-polar geometry for a `w x h` source centred in the frame.
    pub fn logpolar_config(&self, w: usize, h: usize) -> LogPolarConfig {
        LogPolarConfig {
            center: ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
            r_min: self.r_min,
            r_max: self.r_max,
            n_theta: self.n_theta,
            n_rho: self.n_rho,
            theta_zero: 0.0,
        }
    }

    pub fn require_variant(&self) -> Result<Variant, CliError> {
        self.variant
            .ok_or_else(|| CliError::Usage("--variant is required (euclidean or logpolar)".into()))
    }
}
