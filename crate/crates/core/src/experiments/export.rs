//! CSV and PGM serialisation of sweep results. Output is a pure function of
//! the input values, so re-exporting the same matrix gives identical bytes.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::compression::CompressionPoint;
use super::sweep::{AccuracyMatrix, Cell, DiffMap};
use super::{ExperimentError, Variant};
use crate::imageops::Image;
use crate::pgm;

#[derive(Serialize, Deserialize)]
struct MatrixRow {
    rotation_deg: f64,
    scale_pct: f64,
    variant: Variant,
    accuracy: f64,
    n_samples: usize,
}

#[derive(Serialize, Deserialize)]
struct DiffRow {
    rotation_deg: f64,
    scale_pct: f64,
    delta: f64,
}

/// `0.9 * 100` is `90.00000000000001`; percentages are kept to 1e-9.
fn pct(s: f64) -> f64 {
    (s * 100.0 * 1e9).round() / 1e9
}

fn to_string(w: csv::Writer<Vec<u8>>) -> Result<String, ExperimentError> {
    let bytes = w
        .into_inner()
        .map_err(|e| ExperimentError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `rotation_deg,scale_pct,variant,accuracy,n_samples`, rotation-major.
pub fn matrix_csv(m: &AccuracyMatrix) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (r, &rot) in m.rotations.iter().enumerate() {
        for (s, &sc) in m.scales.iter().enumerate() {
            let c = m.cells[r][s];
            w.serialize(MatrixRow {
                rotation_deg: rot,
                scale_pct: pct(sc),
                variant: m.variant,
                accuracy: c.accuracy,
                n_samples: c.n_samples,
            })?;
        }
    }
    to_string(w)
}

/// Reads back a [`matrix_csv`] file. Rotations and scales keep their first
/// appearance order.
pub fn parse_matrix_csv(text: &str) -> Result<AccuracyMatrix, ExperimentError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<MatrixRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    let first = rows
        .first()
        .ok_or_else(|| ExperimentError::BadSpec("matrix csv has no rows".into()))?;
    let variant = first.variant;
    let mut rotations: Vec<f64> = Vec::new();
    let mut scales: Vec<f64> = Vec::new();
    for row in &rows {
        if row.variant != variant {
            return Err(ExperimentError::BadSpec("matrix csv mixes variants".into()));
        }
        if !rotations.contains(&row.rotation_deg) {
            rotations.push(row.rotation_deg);
        }
        let s = row.scale_pct / 100.0;
        if !scales.iter().any(|&x| (x - s).abs() < 1e-9) {
            scales.push(s);
        }
    }
    let mut cells = vec![vec![None; scales.len()]; rotations.len()];
    for row in &rows {
        let r = rotations.iter().position(|&x| x == row.rotation_deg).unwrap();
        let s = scales
            .iter()
            .position(|&x| (x - row.scale_pct / 100.0).abs() < 1e-9)
            .unwrap();
        cells[r][s] = Some(Cell {
            accuracy: row.accuracy,
            n_samples: row.n_samples,
        });
    }
    let cells = cells
        .into_iter()
        .map(|row| row.into_iter().collect::<Option<Vec<_>>>())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| ExperimentError::BadSpec("matrix csv is missing cells".into()))?;
    Ok(AccuracyMatrix {
        variant,
        rotations,
        scales,
        cells,
        manifest_id: String::new(),
    })
}

/// `rotation_deg,scale_pct,delta`.
pub fn diff_csv(d: &DiffMap) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (r, &rot) in d.rotations.iter().enumerate() {
        for (s, &sc) in d.scales.iter().enumerate() {
            w.serialize(DiffRow {
                rotation_deg: rot,
                scale_pct: pct(sc),
                delta: d.deltas[r][s],
            })?;
        }
    }
    to_string(w)
}

/// `n_theta,n_rho,compression_factor,test_accuracy,epochs`.
pub fn compression_csv(points: &[CompressionPoint]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p)?;
    }
    if points.is_empty() {
        w.write_record(["n_theta", "n_rho", "compression_factor", "test_accuracy", "epochs"])?;
    }
    to_string(w)
}

pub fn parse_compression_csv(text: &str) -> Result<Vec<CompressionPoint>, ExperimentError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// Heatmap with scales down the rows and rotations across the columns:
/// accuracy 0 is black, 1 is white.
pub fn matrix_pgm(m: &AccuracyMatrix) -> Vec<u8> {
    let (w, h) = (m.rotations.len(), m.scales.len());
    let mut img = Image::zeros(w, h);
    for r in 0..w {
        for s in 0..h {
            img.set(r, s, m.cells[r][s].accuracy as f32);
        }
    }
    pgm::encode(&img)
}

/// Delta heatmap: -1 is black, 0 mid-grey (128), +1 white.
pub fn diff_pgm(d: &DiffMap) -> Vec<u8> {
    let (w, h) = (d.rotations.len(), d.scales.len());
    let mut img = Image::zeros(w, h);
    for r in 0..w {
        for s in 0..h {
            img.set(r, s, ((d.deltas[r][s] + 1.0) / 2.0) as f32);
        }
    }
    pgm::encode(&img)
}

/// Creates `path` and fails if it already exists.
pub fn write_new_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let mut f = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(ExperimentError::io(path))?;
    f.write_all(bytes).map_err(ExperimentError::io(path))
}

/// Writes `<stem>.csv` and `<stem>.pgm` under `dir`.
pub fn write_matrix(m: &AccuracyMatrix, dir: &Path, stem: &str) -> Result<(), ExperimentError> {
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, matrix_csv(m)?).map_err(ExperimentError::io(&csv_path))?;
    let pgm_path = dir.join(format!("{stem}.pgm"));
    std::fs::write(&pgm_path, matrix_pgm(m)).map_err(ExperimentError::io(&pgm_path))
}
