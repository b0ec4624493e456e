//! `report`: gathers result files under a directory, compares them with the
//! reference figures and bands, and renders the difference map.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use logpolar_core::experiments::{
    diff_map, parse_compression_csv, parse_matrix_csv, AccuracyMatrix, CompressionPoint, DiffMap, RunManifest, Variant,
};
use serde::Deserialize;
use walkdir::WalkDir;

use crate::error::CliError;
use crate::run::MANIFEST;

/// Reference figures and pass bands.
pub mod reference {
    pub const EUCLIDEAN_ACCURACY: f64 = 0.9859;
    pub const EUCLIDEAN_MIN: f64 = 0.975;
    pub const LOGPOLAR_ACCURACY: f64 = 0.9773;
    pub const LOGPOLAR_MIN: f64 = 0.965;
    /// Accuracy a scale must exceed to count as held.
    pub const SCALE_HOLD: f64 = 0.90;
    /// Lowest held scale at 0 degrees.
    pub const EUCLIDEAN_FLOOR: f64 = 0.8;
    pub const LOGPOLAR_FLOOR: f64 = 0.6;
    /// Allowed movement of a floor, in scale units.
    pub const FLOOR_TOLERANCE: f64 = 0.1;
    pub const ROTATIONS: [f64; 6] = [30.0, -30.0, 60.0, -60.0, 90.0, -90.0];
    pub const COMPRESSION_FACTOR: f64 = 0.201;
    pub const COMPRESSION_ACCURACY: f64 = 0.938;
    pub const COMPRESSION_RANGE: (f64, f64) = (0.19, 0.21);
    pub const COMPRESSION_MIN: f64 = 0.92;
    /// Allowed gap between the factor-1.0 entry and the log-polar baseline.
    pub const FULL_GRID_GAP: f64 = 0.005;
}

/// Result files found under a directory; later paths (in sorted order) win.
#[derive(Debug, Default)]
pub struct Collected {
    pub sweeps: BTreeMap<Variant, (PathBuf, AccuracyMatrix)>,
    pub compression: Option<(PathBuf, Vec<CompressionPoint>)>,
    /// Final test accuracy of each trained baseline.
    pub baselines: BTreeMap<Variant, (PathBuf, f64)>,
}

#[derive(Deserialize)]
struct EpochRow {
    #[allow(dead_code)]
    epoch: usize,
    #[allow(dead_code)]
    train_loss: f64,
    test_accuracy: Option<f64>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

/// Final accuracy in a training `report.csv`.
pub fn final_accuracy(path: &Path) -> Result<Option<f64>, CliError> {
    let text = read(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut last = None;
    for row in rdr.deserialize::<EpochRow>() {
        let row = row.map_err(|e| CliError::Experiment(e.into()))?;
        last = row.test_accuracy;
    }
    Ok(last)
}

impl Collected {
    pub fn is_empty(&self) -> bool {
        self.sweeps.is_empty() && self.compression.is_none() && self.baselines.is_empty()
    }

    pub fn scan(dir: &Path) -> Result<Self, CliError> {
        if !dir.is_dir() {
            return Err(CliError::NoResults(dir.to_path_buf()));
        }
        let mut out = Collected::default();
        for entry in WalkDir::new(dir).sort_by_file_name() {
            let entry = entry.map_err(|e| CliError::io(dir)(e.into()))?;
            let path = entry.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            match name {
                "sweep-euclidean.csv" | "sweep-logpolar.csv" => {
                    let m = parse_matrix_csv(&read(path)?)?;
                    out.sweeps.insert(m.variant, (path.to_path_buf(), m));
                }
                "compression.csv" => {
                    let pts = parse_compression_csv(&read(path)?)?;
                    out.compression = Some((path.to_path_buf(), pts));
                }
                "report.csv" => {
                    let Some(manifest) = path.parent().map(|p| p.join(MANIFEST)).filter(|p| p.exists()) else {
                        continue;
                    };
                    let manifest = RunManifest::read(&manifest)?;
                    let variant = manifest
                        .config
                        .get("variant")
                        .and_then(|v| v.as_str())
                        .and_then(|v| v.parse().ok());
                    if let (Some(variant), Some(acc)) = (variant, final_accuracy(path)?) {
                        out.baselines.insert(variant, (path.to_path_buf(), acc));
                    }
                }
                _ => {}
            }
        }
        if out.is_empty() {
            return Err(CliError::NoResults(dir.to_path_buf()));
        }
        Ok(out)
    }

    pub fn diff(&self) -> Result<Option<DiffMap>, CliError> {
        match (
            self.sweeps.get(&Variant::LogPolar),
            self.sweeps.get(&Variant::Euclidean),
        ) {
            (Some((_, lp)), Some((_, eu))) => Ok(Some(diff_map(lp, eu)?)),
            _ => Ok(None),
        }
    }
}

/// Lowest scale down to which accuracy at 0 degrees stays above `hold`,
/// walking down from the largest scale. `None` if even the largest fails.
pub fn scale_floor(m: &AccuracyMatrix, hold: f64) -> Option<f64> {
    let r = m.rotation_index(0.0)?;
    let mut order: Vec<usize> = (0..m.scales.len()).collect();
    order.sort_by(|&a, &b| m.scales[b].total_cmp(&m.scales[a]));
    let mut floor = None;
    for i in order {
        if m.cells[r][i].accuracy > hold {
            floor = Some(m.scales[i]);
        } else {
            break;
        }
    }
    floor
}

/// One measured quantity against its reference.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: String,
    pub reference: String,
    pub band: String,
    pub pass: bool,
}

fn pct(x: f64) -> String {
    format!("{:.0}%", x * 100.0)
}

pub fn baseline_check(variant: Variant, accuracy: f64) -> Check {
    let (reference, min) = match variant {
        Variant::Euclidean => (reference::EUCLIDEAN_ACCURACY, reference::EUCLIDEAN_MIN),
        Variant::LogPolar => (reference::LOGPOLAR_ACCURACY, reference::LOGPOLAR_MIN),
    };
    Check {
        name: format!("{variant} baseline accuracy"),
        measured: format!("{accuracy:.4}"),
        reference: format!("{reference:.4}"),
        band: format!(">= {min}"),
        pass: accuracy >= min,
    }
}

pub fn scale_band_check(m: &AccuracyMatrix) -> Check {
    let expected = match m.variant {
        Variant::Euclidean => reference::EUCLIDEAN_FLOOR,
        Variant::LogPolar => reference::LOGPOLAR_FLOOR,
    };
    let floor = scale_floor(m, reference::SCALE_HOLD);
    let (lo, hi) = (
        expected - reference::FLOOR_TOLERANCE,
        expected + reference::FLOOR_TOLERANCE,
    );
    Check {
        name: format!("{} holds > {} at 0 deg down to", m.variant, pct(reference::SCALE_HOLD)),
        measured: floor.map_or_else(|| "none".to_string(), pct),
        reference: pct(expected),
        band: format!("{}..{}", pct(lo), pct(hi)),
        pass: floor.is_some_and(|f| f >= lo - 1e-9 && f <= hi + 1e-9),
    }
}

pub fn rotation_check(d: &DiffMap) -> Option<Check> {
    let mean = d.mean_over(&reference::ROTATIONS, 1.0)?;
    Some(Check {
        name: "mean delta (logpolar - euclidean) at +-30/60/90 deg, 100%".into(),
        measured: format!("{mean:+.4}"),
        reference: "> 0".into(),
        band: "> 0".into(),
        pass: mean > 0.0,
    })
}

pub fn compression_checks(points: &[CompressionPoint], logpolar_baseline: Option<f64>) -> Vec<Check> {
    let (lo, hi) = reference::COMPRESSION_RANGE;
    let mut out = Vec::new();
    let in_range = points
        .iter()
        .filter(|p| p.compression_factor >= lo && p.compression_factor <= hi)
        .max_by(|a, b| a.test_accuracy.total_cmp(&b.test_accuracy));
    out.push(Check {
        name: format!("accuracy at compression factor {lo}..{hi}"),
        measured: in_range.map_or_else(
            || "no grid in range".to_string(),
            |p| {
                format!(
                    "{:.4} ({}x{}, factor {:.4})",
                    p.test_accuracy, p.n_theta, p.n_rho, p.compression_factor
                )
            },
        ),
        reference: format!(
            "{} at {}",
            reference::COMPRESSION_ACCURACY,
            reference::COMPRESSION_FACTOR
        ),
        band: format!(">= {}", reference::COMPRESSION_MIN),
        pass: in_range.is_some_and(|p| p.test_accuracy >= reference::COMPRESSION_MIN),
    });
    if let Some(full) = points.iter().find(|p| (p.compression_factor - 1.0).abs() < 1e-12) {
        let (measured, pass) = match logpolar_baseline {
            Some(b) => (
                format!("{:.4} vs baseline {b:.4}", full.test_accuracy),
                (full.test_accuracy - b).abs() <= reference::FULL_GRID_GAP + 1e-12,
            ),
            None => (format!("{:.4} (no logpolar baseline found)", full.test_accuracy), false),
        };
        out.push(Check {
            name: "factor 1.0 entry matches the logpolar baseline".into(),
            measured,
            reference: "equal".into(),
            band: format!("within {}", reference::FULL_GRID_GAP),
            pass,
        });
    }
    out
}

pub fn checks(c: &Collected) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    for (&variant, (_, acc)) in &c.baselines {
        out.push(baseline_check(variant, *acc));
    }
    for (_, m) in c.sweeps.values() {
        out.push(scale_band_check(m));
    }
    if let Some(d) = c.diff()? {
        out.extend(rotation_check(&d));
    }
    if let Some((_, pts)) = &c.compression {
        out.extend(compression_checks(
            pts,
            c.baselines.get(&Variant::LogPolar).map(|b| b.1),
        ));
    }
    Ok(out)
}

fn rel(path: &Path, root: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

/// Plain-text summary; a pure function of the collected files.
pub fn summary(c: &Collected, root: &Path) -> Result<String, CliError> {
    let mut s = String::new();
    let _ = writeln!(s, "log-polar MNIST results summary");
    let _ = writeln!(s);
    let _ = writeln!(s, "inputs:");
    for (v, (p, _)) in &c.baselines {
        let _ = writeln!(s, "  {v} training report: {}", rel(p, root));
    }
    for (v, (p, _)) in &c.sweeps {
        let _ = writeln!(s, "  {v} sweep: {}", rel(p, root));
    }
    if let Some((p, _)) = &c.compression {
        let _ = writeln!(s, "  compression sweep: {}", rel(p, root));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "checks (measured / reference / band):");
    for ch in checks(c)? {
        let _ = writeln!(
            s,
            "  [{}] {}: {} / {} / {}",
            if ch.pass { "ok" } else { "outside band" },
            ch.name,
            ch.measured,
            ch.reference,
            ch.band
        );
    }
    for (v, (_, m)) in &c.sweeps {
        let _ = writeln!(s);
        let _ = writeln!(s, "{v} accuracy (rows: scale, columns: rotation in degrees):");
        let _ = write!(s, "  {:>6}", "");
        for r in &m.rotations {
            let _ = write!(s, " {r:>6}");
        }
        let _ = writeln!(s);
        for (j, sc) in m.scales.iter().enumerate() {
            let _ = write!(s, "  {:>6}", pct(*sc));
            for row in &m.cells {
                let _ = write!(s, " {:>6.4}", row[j].accuracy);
            }
            let _ = writeln!(s);
        }
    }
    if let Some((_, pts)) = &c.compression {
        let _ = writeln!(s);
        let _ = writeln!(s, "compression sweep:");
        for p in pts {
            let _ = writeln!(
                s,
                "  {:>2}x{:<2} factor {:.4} accuracy {:.4}",
                p.n_theta, p.n_rho, p.compression_factor, p.test_accuracy
            );
        }
    }
    if c.diff()?.is_some() {
        let _ = writeln!(s);
        let _ = writeln!(s, "difference map (logpolar - euclidean): diff-map.pgm, diff-map.csv");
    }
    Ok(s)
}
